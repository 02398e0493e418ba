//! Input-output diagram at a closed bottleneck.
//!
//! Arrivals form a cumulative curve `N(t)` with piecewise-constant hourly
//! slopes. While the closure lasts the bottleneck serves at `mu1`, afterwards
//! at `mu2`. The departure curve `D(t)` is the fluid queue output, so the
//! vertical gap `N - D` is the queue, the horizontal gap is a vehicle's delay
//! and the enclosed area is the total delay. Time is in hours from the
//! closure start unless a field says otherwise.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::assignment::csv_err;
use crate::error::{Error, Result};

/// Bottleneck and traffic-stream parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueueParams {
    /// Capacity, veh/h.
    pub q_max: f64,
    /// Jam density, veh/km.
    pub k_j: f64,
    /// Free-flow speed, km/h.
    pub v_f: f64,
    /// Critical density, veh/km.
    pub k_c: f64,
    /// Service rate during the closure, veh/h.
    pub mu1: f64,
    /// Service rate after reopening, veh/h.
    pub mu2: f64,
    /// Speed through the restricted section, km/h.
    pub v_mu1: f64,
    /// Length of the restricted section, km.
    pub d_km: f64,
    /// Free-flow traversal time, h.
    pub t_f: f64,
    /// Add `d_km / v_mu1` to every reported delay statistic.
    pub include_bottleneck_traversal: bool,
    /// Read `k_j` as per lane rather than for the whole roadway.
    pub jam_density_per_lane: bool,
}

impl Default for QueueParams {
    fn default() -> Self {
        QueueParams {
            q_max: 6000.0,
            k_j: 600.0,
            v_f: 120.0,
            k_c: 50.0,
            mu1: 1.0,
            mu2: 6000.0,
            v_mu1: 0.5,
            d_km: 1.0,
            t_f: 0.01,
            include_bottleneck_traversal: false,
            jam_density_per_lane: false,
        }
    }
}

impl QueueParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.q_max, self.k_j, self.v_f, self.k_c, self.mu2, self.v_mu1, self.d_km, self.t_f,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || !(self.mu1 >= 0.0) {
            return Err(Error::invalid("queue parameters must be positive"));
        }
        if self.mu1 >= self.mu2 {
            return Err(Error::invalid("mu1 must be below mu2"));
        }
        if self.mu2 > self.q_max {
            return Err(Error::invalid("mu2 cannot exceed q_max"));
        }
        if self.k_c >= self.k_j {
            return Err(Error::invalid("k_c must be below k_j"));
        }
        Ok(())
    }

    /// Time to cross the restricted section, minutes.
    pub fn bottleneck_traversal_min(&self) -> f64 {
        60.0 * self.d_km / self.v_mu1
    }
}

/// Cumulative arrivals with hourly piecewise-constant rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalCurve {
    pub start_clock: f64,
    pub horizon_hr: f64,
    /// One rate per hour up to the horizon; the last given rate is held.
    pub hourly_flows: Vec<f64>,
}

pub fn build_arrivals(flows: &[f64], start_clock: f64, horizon_hr: f64) -> Result<ArrivalCurve> {
    let last = *flows
        .last()
        .ok_or_else(|| Error::invalid("arrival flow list is empty"))?;
    if flows.iter().any(|f| !(*f >= 0.0) || !f.is_finite()) {
        return Err(Error::invalid("arrival flows must be nonnegative"));
    }
    if !(horizon_hr > 0.0) || !horizon_hr.is_finite() {
        return Err(Error::invalid(format!("horizon must be > 0, got {horizon_hr}")));
    }
    let hours = horizon_hr.ceil() as usize;
    let mut hourly_flows: Vec<f64> = flows.iter().copied().take(hours).collect();
    hourly_flows.resize(hours.max(1), last);
    Ok(ArrivalCurve {
        start_clock,
        horizon_hr,
        hourly_flows,
    })
}

impl ArrivalCurve {
    pub fn rate_at(&self, t: f64) -> f64 {
        let i = (t.max(0.0).floor() as usize).min(self.hourly_flows.len() - 1);
        self.hourly_flows[i]
    }

    /// `N(t)`, vehicles arrived since the start.
    pub fn cumulative(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.horizon_hr);
        let whole = t.floor() as usize;
        let full: f64 = self.hourly_flows.iter().take(whole).sum();
        if whole < self.hourly_flows.len() {
            full + self.hourly_flows[whole] * (t - whole as f64)
        } else {
            full
        }
    }

    /// Whole-vehicle cumulative counts at each hour boundary: each hour's
    /// flow is rounded to vehicles before accumulating.
    pub fn boundary_counts(&self) -> Vec<u64> {
        let mut acc = 0u64;
        let whole = self.horizon_hr.floor() as usize;
        self.hourly_flows
            .iter()
            .take(whole)
            .map(|f| {
                acc += f.round() as u64;
                acc
            })
            .collect()
    }

    /// Hour boundaries strictly inside the horizon, plus both ends.
    fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = (0..self.hourly_flows.len())
            .map(|h| h as f64)
            .filter(|&t| t < self.horizon_hr)
            .collect();
        b.push(self.horizon_hr);
        b
    }
}

/// Which per-vehicle delay figure feeds downstream decisions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayStatistic {
    AverageOverDelayed,
    Maximum,
    /// Percentile in `[0, 100]` over delayed vehicles.
    Percentile(f64),
}

impl std::fmt::Display for DelayStatistic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DelayStatistic::AverageOverDelayed => write!(f, "average_over_delayed"),
            DelayStatistic::Maximum => write!(f, "maximum"),
            DelayStatistic::Percentile(p) => write!(f, "p{p}"),
        }
    }
}

/// A point on both cumulative curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t_hr: f64,
    pub arrivals: f64,
    pub departures: f64,
}

impl CurvePoint {
    pub fn queue(&self) -> f64 {
        (self.arrivals - self.departures).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayResult {
    pub closure_duration_hr: f64,
    pub total_delay_veh_hr: f64,
    pub avg_delay_min: f64,
    pub max_delay_min: f64,
    pub delayed_vehicles: f64,
    /// Hours after the closure start at which the queue is gone.
    pub clearance_hr: f64,
    pub clearance_clock: f64,
    pub max_queue_veh: f64,
    pub max_queue_km: f64,
    /// Diagnostic only unless the traversal flag is set.
    pub bottleneck_traversal_min: f64,
    pub include_bottleneck_traversal: bool,
    /// Breakpoints of `N` and `D` from the start to clearance.
    #[serde(skip)]
    pub curve: Vec<CurvePoint>,
}

fn first_reaching(points: &[(f64, f64)], n: f64, strict: bool) -> Option<f64> {
    let hit = |v: f64| if strict { v > n } else { v >= n };
    let (t0, v0) = *points.first()?;
    if hit(v0) {
        return Some(t0);
    }
    for w in points.windows(2) {
        let ((ta, va), (tb, vb)) = (w[0], w[1]);
        if hit(vb) {
            return Some(if vb > va {
                ta + (n - va) / (vb - va) * (tb - ta)
            } else {
                tb
            });
        }
    }
    None
}

impl DelayResult {
    fn series(&self, pick: impl Fn(&CurvePoint) -> f64) -> Vec<(f64, f64)> {
        self.curve.iter().map(|p| (p.t_hr, pick(p))).collect()
    }

    /// Delay of the `n`-th vehicle (fluid index), hours. Uses the left limit
    /// when `right` is false and the right limit otherwise.
    fn vehicle_delay_hr(&self, arr: &[(f64, f64)], dep: &[(f64, f64)], n: f64, right: bool) -> Option<f64> {
        let a = first_reaching(arr, n, right)?;
        let d = first_reaching(dep, n, right)?;
        Some((d - a).max(0.0))
    }

    /// Delay of the vehicle with cumulative index `n`, minutes.
    pub fn vehicle_delay_min(&self, n: f64) -> f64 {
        let arr = self.series(|p| p.arrivals);
        let dep = self.series(|p| p.departures);
        self.vehicle_delay_hr(&arr, &dep, n, false).unwrap_or(0.0) * 60.0
    }

    /// Percentile of per-vehicle delay among delayed vehicles, minutes,
    /// from an even sample of vehicle indices.
    pub fn percentile_delay_min(&self, pct: f64) -> f64 {
        const SAMPLES: usize = 20_000;
        let total = self.curve.last().map_or(0.0, |p| p.arrivals);
        if total <= 0.0 || self.delayed_vehicles <= 0.0 {
            return 0.0;
        }
        let arr = self.series(|p| p.arrivals);
        let dep = self.series(|p| p.departures);
        let mut delays: Vec<f64> = (0..SAMPLES)
            .filter_map(|k| {
                let n = (k as f64 + 0.5) * total / SAMPLES as f64;
                self.vehicle_delay_hr(&arr, &dep, n, false)
            })
            .filter(|d| *d > 0.0)
            .collect();
        if delays.is_empty() {
            return 0.0;
        }
        delays.sort_by(f64::total_cmp);
        let rank = ((pct / 100.0) * delays.len() as f64).ceil() as usize;
        delays[rank.clamp(1, delays.len()) - 1] * 60.0
    }

    /// The requested statistic in minutes, plus the traversal time when the
    /// flag is on.
    pub fn statistic(&self, stat: DelayStatistic) -> f64 {
        let base = match stat {
            DelayStatistic::AverageOverDelayed => self.avg_delay_min,
            DelayStatistic::Maximum => self.max_delay_min,
            DelayStatistic::Percentile(p) => self.percentile_delay_min(p),
        };
        if self.include_bottleneck_traversal && self.total_delay_veh_hr > 0.0 {
            base + self.bottleneck_traversal_min
        } else {
            base
        }
    }

    /// `N`, `D` and queue at time `t`. After clearance `D = N`.
    pub fn sample(&self, arrivals: &ArrivalCurve, t: f64) -> CurvePoint {
        let n = arrivals.cumulative(t);
        let d = match self.curve.last() {
            Some(last) if t < last.t_hr => {
                let i = self.curve.partition_point(|p| p.t_hr <= t);
                let (a, b) = (self.curve[i - 1], self.curve[i]);
                let frac = if b.t_hr > a.t_hr { (t - a.t_hr) / (b.t_hr - a.t_hr) } else { 1.0 };
                a.departures + frac * (b.departures - a.departures)
            }
            _ => n,
        };
        CurvePoint {
            t_hr: t,
            arrivals: n,
            departures: d.min(n),
        }
    }

    /// Breakpoints plus one-minute samples up to clearance, sorted by time.
    pub fn write_curve_csv<W: Write>(&self, arrivals: &ArrivalCurve, out: W) -> Result<()> {
        let end = self.clearance_hr;
        let minutes = (end * 60.0).ceil() as usize;
        let mut times: Vec<f64> = (0..=minutes).map(|m| m as f64 / 60.0).filter(|t| *t <= end).collect();
        times.extend(self.curve.iter().map(|p| p.t_hr));
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t_hr", "N_arrivals", "D_departures", "queue_veh"])
            .map_err(csv_err)?;
        for t in times {
            let p = self.sample(arrivals, t);
            w.write_record([
                t.to_string(),
                p.arrivals.to_string(),
                p.departures.to_string(),
                p.queue().to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }
}

/// Runs the fluid queue for a closure starting at the arrival curve's origin.
pub fn io_delay(arr: &ArrivalCurve, closure_duration_hr: f64, p: &QueueParams) -> Result<DelayResult> {
    p.validate()?;
    if !(closure_duration_hr >= 0.0) || closure_duration_hr > arr.horizon_hr {
        return Err(Error::invalid(format!(
            "closure duration {closure_duration_hr} h outside [0, horizon]"
        )));
    }
    let closure_end = closure_duration_hr;
    let mut bounds = arr.breakpoints();
    bounds.push(closure_end);
    bounds.sort_by(f64::total_cmp);
    bounds.dedup();

    let mut t = 0.0;
    let mut queue = 0.0f64;
    let mut arrived = 0.0;
    let mut curve = vec![CurvePoint {
        t_hr: 0.0,
        arrivals: 0.0,
        departures: 0.0,
    }];
    let mut total_delay = 0.0;
    let mut delayed = 0.0;
    let mut max_queue = 0.0f64;
    let mut clearance = None;

    'outer: for &b in bounds.iter().skip_while(|&&b| b <= 0.0) {
        let lambda = arr.rate_at(t);
        let cap = if t < closure_end { p.mu1 } else { p.mu2 };
        while t < b {
            if t >= closure_end && queue <= 0.0 {
                clearance = Some(t);
                break 'outer;
            }
            let h = b - t;
            let busy = queue > 0.0 || lambda > cap;
            let step = if busy && lambda < cap {
                (queue / (cap - lambda)).min(h)
            } else {
                h
            };
            let q_end = if busy { (queue + (lambda - cap) * step).max(0.0) } else { 0.0 };
            total_delay += 0.5 * (queue + q_end) * step;
            if busy {
                delayed += lambda * step;
            }
            // land exactly on the segment bound to avoid drift
            t = if step == h { b } else { t + step };
            arrived += lambda * step;
            queue = if step < h && busy && lambda < cap { 0.0 } else { q_end };
            max_queue = max_queue.max(queue);
            curve.push(CurvePoint {
                t_hr: t,
                arrivals: arrived,
                departures: arrived - queue,
            });
        }
    }
    let clearance_hr = match clearance {
        Some(c) => c,
        None if queue <= 0.0 && t >= closure_end => t,
        None => {
            return Err(Error::HorizonTooShort {
                horizon_hr: arr.horizon_hr,
            })
        }
    };

    let mut res = DelayResult {
        closure_duration_hr,
        total_delay_veh_hr: total_delay,
        avg_delay_min: if delayed > 0.0 { 60.0 * total_delay / delayed } else { 0.0 },
        max_delay_min: 0.0,
        delayed_vehicles: delayed,
        clearance_hr,
        clearance_clock: arr.start_clock + clearance_hr,
        max_queue_veh: max_queue,
        max_queue_km: max_queue / p.k_j,
        bottleneck_traversal_min: p.bottleneck_traversal_min(),
        include_bottleneck_traversal: p.include_bottleneck_traversal,
        curve,
    };
    res.max_delay_min = max_horizontal_gap(&res) * 60.0;
    Ok(res)
}

fn max_horizontal_gap(res: &DelayResult) -> f64 {
    if res.delayed_vehicles <= 0.0 {
        return 0.0;
    }
    let arr = res.series(|p| p.arrivals);
    let dep = res.series(|p| p.departures);
    // delay is piecewise linear in the vehicle index between the curves'
    // breakpoint values, so the maximum sits at one of them
    let mut candidates: Vec<f64> = res
        .curve
        .iter()
        .flat_map(|p| [p.arrivals, p.departures])
        .collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    candidates
        .into_iter()
        .flat_map(|n| {
            [
                res.vehicle_delay_hr(&arr, &dep, n, false),
                res.vehicle_delay_hr(&arr, &dep, n, true),
            ]
        })
        .flatten()
        .fold(0.0, f64::max)
}

/// Physical back-of-queue distance in km.
pub fn queue_extent(res: &DelayResult, lanes: u32, p: &QueueParams) -> f64 {
    if p.jam_density_per_lane {
        res.max_queue_veh / (p.k_j * lanes.max(1) as f64)
    } else {
        res.max_queue_veh / p.k_j
    }
}

/// How a duration bracket is represented when evaluating its delay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BracketPoint {
    Midpoint,
    UpperEnd,
    /// Mean of the statistic over ten evenly spaced durations in the bracket.
    Mean,
}

/// A duration bracket `(lower, upper]` with a target delay in minutes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayBracket {
    pub lower_hr: f64,
    pub upper_hr: f64,
    pub target_min: f64,
}

/// Published bracket delays for the A1 closure.
pub const A1_DELAY_BRACKETS: [DelayBracket; 3] = [
    DelayBracket { lower_hr: 0.0, upper_hr: 1.0, target_min: 26.1 },
    DelayBracket { lower_hr: 1.0, upper_hr: 2.0, target_min: 85.9 },
    DelayBracket { lower_hr: 2.0, upper_hr: 3.0, target_min: 145.9 },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub statistic: DelayStatistic,
    pub bracket_point: BracketPoint,
    pub include_bottleneck_traversal: bool,
    pub delays_min: Vec<f64>,
    pub targets_min: Vec<f64>,
    /// Largest `|delay / target - 1|` over the brackets.
    pub max_relative_error: f64,
}

/// Evaluates every (statistic, bracket point, traversal flag) combination
/// against the bracket targets. Rows are sorted best first.
pub fn calibrate_brackets(
    arr: &ArrivalCurve,
    brackets: &[DelayBracket],
    p: &QueueParams,
) -> Result<Vec<CalibrationRow>> {
    let stats = [
        DelayStatistic::AverageOverDelayed,
        DelayStatistic::Maximum,
        DelayStatistic::Percentile(50.0),
        DelayStatistic::Percentile(90.0),
    ];
    let points = [BracketPoint::Midpoint, BracketPoint::UpperEnd, BracketPoint::Mean];
    let mut rows = Vec::new();
    for flag in [false, true] {
        let params = QueueParams {
            include_bottleneck_traversal: flag,
            ..*p
        };
        for point in points {
            // the duration set depends only on the point; share runs across stats
            let runs: Vec<Vec<DelayResult>> = brackets
                .iter()
                .map(|b| {
                    bracket_durations(b, point)
                        .into_iter()
                        .map(|d| io_delay(arr, d, &params))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?;
            for stat in stats {
                let delays_min: Vec<f64> = runs
                    .iter()
                    .map(|rs| rs.iter().map(|r| r.statistic(stat)).sum::<f64>() / rs.len() as f64)
                    .collect();
                let targets_min: Vec<f64> = brackets.iter().map(|b| b.target_min).collect();
                let max_relative_error = delays_min
                    .iter()
                    .zip(&targets_min)
                    .map(|(d, t)| (d / t - 1.0).abs())
                    .fold(0.0, f64::max);
                rows.push(CalibrationRow {
                    statistic: stat,
                    bracket_point: point,
                    include_bottleneck_traversal: flag,
                    delays_min,
                    targets_min,
                    max_relative_error,
                });
            }
        }
    }
    rows.sort_by(|a, b| a.max_relative_error.total_cmp(&b.max_relative_error));
    Ok(rows)
}

fn bracket_durations(b: &DelayBracket, point: BracketPoint) -> Vec<f64> {
    match point {
        BracketPoint::Midpoint => vec![0.5 * (b.lower_hr + b.upper_hr)],
        BracketPoint::UpperEnd => vec![b.upper_hr],
        BracketPoint::Mean => (1..=10)
            .map(|k| b.lower_hr + (b.upper_hr - b.lower_hr) * k as f64 / 10.0)
            .collect(),
    }
}
