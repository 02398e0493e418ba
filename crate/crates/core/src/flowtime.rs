//! Congested segment speeds and route travel times.
//!
//! Speed falls quadratically with the per-lane-width flow and is floored:
//!
//! ```text
//! v = max(v_f - alpha * (q / (lane_width_m * lanes))^2, floor)
//! t = 60 * L / v        (minutes)
//! ```
//!
//! `q` is in veh/h and the lane width in metres; `alpha` is calibrated for
//! exactly these units.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::assignment::{csv_err, Itinerary, LinkFlows};
use crate::error::{Error, Result};
use crate::netmodel::{Network, DEFAULT_LANE_WIDTH_M};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeedFlowParams {
    pub alpha: f64,
    pub lane_width_m: f64,
    pub floor_speed_kmh: f64,
}

impl Default for SpeedFlowParams {
    fn default() -> Self {
        SpeedFlowParams {
            alpha: 0.0001,
            lane_width_m: DEFAULT_LANE_WIDTH_M,
            floor_speed_kmh: 5.0,
        }
    }
}

impl SpeedFlowParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.floor_speed_kmh > 0.0 && self.lane_width_m > 0.0) {
            return Err(Error::invalid(
                "speed-flow alpha, lane width and floor speed must be > 0",
            ));
        }
        Ok(())
    }
}

/// Congested speed in km/h.
pub fn segment_speed(q: f64, v_f: f64, lanes: u32, p: &SpeedFlowParams) -> f64 {
    debug_assert!(q >= 0.0 && v_f > 0.0 && lanes >= 1);
    let x = q / (p.lane_width_m * lanes as f64);
    (v_f - p.alpha * x * x).max(p.floor_speed_kmh)
}

/// Congested traversal time in minutes.
pub fn segment_time(length_km: f64, q: f64, v_f: f64, lanes: u32, p: &SpeedFlowParams) -> f64 {
    60.0 * length_km / segment_speed(q, v_f, lanes, p)
}

/// Sum of segment times along an itinerary, each loaded with its background
/// flow plus the added (diverted) flow. Each link's own lane width is used.
pub fn route_time(
    net: &Network,
    itinerary: &Itinerary,
    background: &LinkFlows,
    added: &LinkFlows,
    p: &SpeedFlowParams,
) -> Result<f64> {
    itinerary.links.iter().try_fold(0.0, |acc, id| {
        let l = net.link(id).ok_or_else(|| Error::UnknownLink(id.clone()))?;
        let q = background.get(id) + added.get(id);
        let lp = SpeedFlowParams {
            lane_width_m: l.lane_width_m,
            ..*p
        };
        Ok(acc + segment_time(l.length_km, q, l.free_flow_kmh, l.lanes, &lp))
    })
}

/// One row of a route-time report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteTimeRow {
    pub itinerary: String,
    pub travel_time_min: f64,
    pub length_km: f64,
}

pub fn write_route_times<W: Write>(rows: &[RouteTimeRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}
