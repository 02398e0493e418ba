//! When to open alternative routes.
//!
//! An alternative is worth opening when its travel time does not exceed the
//! main route's upstream and downstream times plus the closure delay. Times
//! come from a [`TravelTimes`] source: either tabulated fixtures or a live
//! computation over a network with [`LiveTimes`].

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::assignment::{csv_err, Itinerary, LinkFlows};
use crate::error::{Error, Result};
use crate::flowtime::{route_time, SpeedFlowParams};
use crate::netmodel::Network;
use crate::queueing::{io_delay, ArrivalCurve, DelayStatistic, QueueParams};

/// Alternatives in evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    /// Local roads only, with the whole main-route flow still present.
    Micro,
    MacroLeft,
    MacroRight,
    /// Local roads after both macro routes have taken their share.
    MacroThenMicro,
}

impl Alternative {
    pub const ORDER: [Alternative; 4] = [
        Alternative::Micro,
        Alternative::MacroLeft,
        Alternative::MacroRight,
        Alternative::MacroThenMicro,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Alternative::Micro => "micro",
            Alternative::MacroLeft => "macro_left",
            Alternative::MacroRight => "macro_right",
            Alternative::MacroThenMicro => "macro_then_micro",
        }
    }

    /// Flow regime on the main route while this alternative is judged.
    pub fn residual(self) -> Residual {
        match self {
            Alternative::MacroThenMicro => Residual::AfterMacro,
            _ => Residual::Full,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Residual {
    Full,
    AfterMacro,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Hold,
    Activate,
}

impl Decision {
    pub fn is_active(self) -> bool {
        self == Decision::Activate
    }
}

pub fn main_route_total(upstream_min: f64, downstream_min: f64, delay_min: f64) -> f64 {
    upstream_min + downstream_min + delay_min
}

/// Ties activate.
pub fn should_activate(t_alternative_min: f64, t_main_total_min: f64) -> Decision {
    if t_alternative_min <= t_main_total_min {
        Decision::Activate
    } else {
        Decision::Hold
    }
}

/// Travel times of one alternative and of the main-route stretch it replaces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteTimes {
    pub t_alternative_min: f64,
    #[serde(default)]
    pub t_upstream_min: f64,
    pub t_downstream_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteComparison {
    pub alternative: Alternative,
    pub t_alternative_min: f64,
    pub t_main_upstream_min: f64,
    pub t_main_downstream_min: f64,
    pub t_delay_min: f64,
}

impl RouteComparison {
    pub fn t_main_total_min(&self) -> f64 {
        main_route_total(self.t_main_upstream_min, self.t_main_downstream_min, self.t_delay_min)
    }

    pub fn decision(&self) -> Decision {
        should_activate(self.t_alternative_min, self.t_main_total_min())
    }
}

/// Rate-dependent travel times and closure delays.
pub trait TravelTimes {
    fn route_times(&self, alternative: Alternative, response_rate: f64) -> Result<RouteTimes>;

    fn delay_min(&self, duration_hr: f64, residual: Residual, response_rate: f64) -> Result<f64>;

    fn compare(&self, alternative: Alternative, duration_hr: f64, response_rate: f64) -> Result<RouteComparison> {
        let rt = self.route_times(alternative, response_rate)?;
        Ok(RouteComparison {
            alternative,
            t_alternative_min: rt.t_alternative_min,
            t_main_upstream_min: rt.t_upstream_min,
            t_main_downstream_min: rt.t_downstream_min,
            t_delay_min: self.delay_min(duration_hr, alternative.residual(), response_rate)?,
        })
    }
}

/// Delay for closures lasting up to `upper_hr` (and longer than the previous
/// entry's bound).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayStep {
    pub upper_hr: f64,
    pub delay_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayTable {
    pub full: Vec<DelayStep>,
    pub after_macro: Vec<DelayStep>,
}

/// Tabulated times for one response rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFixture {
    pub response_rate: f64,
    /// Whether the numbers are published measurements or constructed.
    #[serde(default)]
    pub note: String,
    pub routes: BTreeMap<Alternative, RouteTimes>,
    pub delay_min: DelayTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureTimes {
    pub rates: Vec<RateFixture>,
}

const RATE_EPS: f64 = 1e-9;

impl FixtureTimes {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            context: "activation fixtures".into(),
            message: e.to_string(),
        })
    }

    /// Published A1 times, 60% response only.
    pub fn a1_flood() -> Self {
        Self::from_json(include_str!("../data/a1_activation.json")).expect("embedded fixture parses")
    }

    /// Rate-tagged set for 30..70% response. Only the 60% entry carries
    /// published times; the others are illustrative.
    pub fn a1_rate_sweep() -> Self {
        Self::from_json(include_str!("../data/a1_rate_sweep.json")).expect("embedded fixture parses")
    }

    fn rate(&self, response_rate: f64) -> Result<&RateFixture> {
        self.rates
            .iter()
            .find(|r| (r.response_rate - response_rate).abs() <= RATE_EPS)
            .ok_or_else(|| Error::MissingFixture(format!("response rate {response_rate}")))
    }
}

impl TravelTimes for FixtureTimes {
    fn route_times(&self, alternative: Alternative, response_rate: f64) -> Result<RouteTimes> {
        self.rate(response_rate)?
            .routes
            .get(&alternative)
            .copied()
            .ok_or_else(|| {
                Error::MissingFixture(format!("{} at rate {response_rate}", alternative.as_str()))
            })
    }

    fn delay_min(&self, duration_hr: f64, residual: Residual, response_rate: f64) -> Result<f64> {
        let table = &self.rate(response_rate)?.delay_min;
        let steps = match residual {
            Residual::Full => &table.full,
            Residual::AfterMacro => &table.after_macro,
        };
        steps
            .iter()
            .find(|s| duration_hr <= s.upper_hr + RATE_EPS)
            .map(|s| s.delay_min)
            .ok_or_else(|| {
                Error::MissingFixture(format!(
                    "{residual:?} delay for {duration_hr} h at rate {response_rate}"
                ))
            })
    }
}

/// An alternative route paired with the main-route stretch it bypasses.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutePair {
    pub alternative: Itinerary,
    pub main: Itinerary,
}

/// Times computed from congested speeds and the input-output diagram.
///
/// Before activation every disrupted vehicle stays on the main route; an
/// active alternative receives the responding share. Macro routes split the
/// responding flow by `branch_weights`; the micro route after the macros
/// receives the responding share of what the macros left behind.
#[derive(Debug, Clone)]
pub struct LiveTimes<'a> {
    pub net: &'a Network,
    pub background: LinkFlows,
    pub disrupted_flow_vph: f64,
    /// Left and right shares of the macro diversion.
    pub branch_weights: [f64; 2],
    pub macro_left: RoutePair,
    pub macro_right: RoutePair,
    pub micro: RoutePair,
    /// Arrivals at the closure with the full disrupted flow.
    pub arrivals: ArrivalCurve,
    pub queue: QueueParams,
    pub statistic: DelayStatistic,
    pub speed: SpeedFlowParams,
}

fn loaded(it: &Itinerary, flow: f64) -> LinkFlows {
    let mut f = LinkFlows::default();
    for id in &it.links {
        f.add(id, flow);
    }
    f
}

impl LiveTimes<'_> {
    fn pair_times(&self, pair: &RoutePair, alt_flow: f64, main_flow: f64) -> Result<RouteTimes> {
        Ok(RouteTimes {
            t_alternative_min: route_time(
                self.net,
                &pair.alternative,
                &self.background,
                &loaded(&pair.alternative, alt_flow),
                &self.speed,
            )?,
            t_upstream_min: 0.0,
            t_downstream_min: route_time(
                self.net,
                &pair.main,
                &self.background,
                &loaded(&pair.main, main_flow),
                &self.speed,
            )?,
        })
    }
}

impl TravelTimes for LiveTimes<'_> {
    fn route_times(&self, alternative: Alternative, response_rate: f64) -> Result<RouteTimes> {
        if !(0.0..=1.0).contains(&response_rate) {
            return Err(Error::invalid(format!("response rate {response_rate} outside [0, 1]")));
        }
        let flow = self.disrupted_flow_vph;
        match alternative {
            Alternative::Micro => self.pair_times(&self.micro, response_rate * flow, flow),
            Alternative::MacroLeft => {
                let share = flow * self.branch_weights[0];
                self.pair_times(&self.macro_left, response_rate * share, share)
            }
            Alternative::MacroRight => {
                let share = flow * self.branch_weights[1];
                self.pair_times(&self.macro_right, response_rate * share, share)
            }
            Alternative::MacroThenMicro => {
                let residual = (1.0 - response_rate) * flow;
                self.pair_times(&self.micro, response_rate * residual, residual)
            }
        }
    }

    fn delay_min(&self, duration_hr: f64, residual: Residual, response_rate: f64) -> Result<f64> {
        let scale = match residual {
            Residual::Full => 1.0,
            Residual::AfterMacro => 1.0 - response_rate,
        };
        let arrivals = ArrivalCurve {
            hourly_flows: self.arrivals.hourly_flows.iter().map(|f| f * scale).collect(),
            ..self.arrivals.clone()
        };
        Ok(io_delay(&arrivals, duration_hr, &self.queue)?.statistic(self.statistic))
    }
}

/// Routes open during a run of durations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub from_hr: f64,
    pub to_hr: f64,
    pub open_routes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanCell {
    pub duration_hr: f64,
    pub comparison: RouteComparison,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationPlan {
    pub response_rate: f64,
    pub durations_hr: Vec<f64>,
    /// Grouped by alternative in evaluation order, then by duration.
    pub cells: Vec<PlanCell>,
    /// Shortest duration at which each alternative activates on its own test.
    pub thresholds_hr: BTreeMap<Alternative, Option<f64>>,
    /// Routes actually opened per duration, after combining the tests.
    pub open_by_duration: Vec<Vec<String>>,
    pub stages: Vec<Stage>,
}

impl ActivationPlan {
    pub fn decision(&self, alternative: Alternative, duration_hr: f64) -> Option<Decision> {
        self.cells
            .iter()
            .find(|c| c.comparison.alternative == alternative && c.duration_hr == duration_hr)
            .map(|c| c.decision)
    }

    /// Once an alternative activates it stays active for longer closures.
    pub fn is_monotone(&self) -> bool {
        Alternative::ORDER.iter().all(|&a| {
            let ds: Vec<bool> = self
                .cells
                .iter()
                .filter(|c| c.comparison.alternative == a)
                .map(|c| c.decision.is_active())
                .collect();
            ds.windows(2).all(|w| !w[0] || w[1])
        })
    }

    /// First duration at which a route is open in the combined strategy.
    pub fn opens_at(&self, route: &str) -> Option<f64> {
        self.durations_hr
            .iter()
            .zip(&self.open_by_duration)
            .find(|(_, open)| open.iter().any(|r| r == route))
            .map(|(d, _)| *d)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["duration_hr", "itinerary", "t_alternative_min", "t_main_total_min", "decision"])
            .map_err(csv_err)?;
        for c in &self.cells {
            w.write_record([
                c.duration_hr.to_string(),
                c.comparison.alternative.as_str().to_string(),
                c.comparison.t_alternative_min.to_string(),
                format!("{:.1}", c.comparison.t_main_total_min()),
                match c.decision {
                    Decision::Activate => "activate",
                    Decision::Hold => "hold",
                }
                .to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }

    pub fn strategy_json(&self) -> serde_json::Value {
        serde_json::json!({
            "response_rate": self.response_rate,
            "thresholds_hr": self.thresholds_hr.iter()
                .map(|(a, t)| (a.as_str().to_string(), serde_json::json!(t)))
                .collect::<serde_json::Map<_, _>>(),
            "stages": self.stages,
        })
    }
}

fn check_durations(durations: &[f64]) -> Result<()> {
    if durations.is_empty() {
        return Err(Error::invalid("no durations given"));
    }
    if durations.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::invalid("durations must be > 0"));
    }
    if durations.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("durations must be strictly ascending"));
    }
    Ok(())
}

/// Evaluates every alternative at every duration and derives the staged
/// strategy: macros open on their own tests; the micro route is judged alone
/// while no macro is open and after the macros once one is.
pub fn activation_plan(
    durations: &[f64],
    response_rate: f64,
    times: &dyn TravelTimes,
) -> Result<ActivationPlan> {
    check_durations(durations)?;
    if !(0.0..=1.0).contains(&response_rate) {
        return Err(Error::invalid(format!("response rate {response_rate} outside [0, 1]")));
    }
    let mut cells = Vec::with_capacity(durations.len() * Alternative::ORDER.len());
    let mut thresholds_hr = BTreeMap::new();
    for alt in Alternative::ORDER {
        let mut threshold = None;
        for &d in durations {
            let comparison = times.compare(alt, d, response_rate)?;
            let decision = comparison.decision();
            if decision.is_active() && threshold.is_none() {
                threshold = Some(d);
            }
            cells.push(PlanCell {
                duration_hr: d,
                comparison,
                decision,
            });
        }
        thresholds_hr.insert(alt, threshold);
    }

    let n = durations.len();
    let decision_at = |alt: Alternative, i: usize| {
        let k = Alternative::ORDER.iter().position(|a| *a == alt).unwrap();
        cells[k * n + i].decision.is_active()
    };
    let open_by_duration: Vec<Vec<String>> = (0..n)
        .map(|i| {
            let left = decision_at(Alternative::MacroLeft, i);
            let right = decision_at(Alternative::MacroRight, i);
            let micro = if left || right {
                decision_at(Alternative::MacroThenMicro, i)
            } else {
                decision_at(Alternative::Micro, i)
            };
            let mut open = Vec::new();
            if left {
                open.push("macro_left".to_string());
            }
            if right {
                open.push("macro_right".to_string());
            }
            if micro {
                open.push("micro".to_string());
            }
            open
        })
        .collect();

    let mut stages: Vec<Stage> = Vec::new();
    for (d, open) in durations.iter().zip(&open_by_duration) {
        match stages.last_mut() {
            Some(s) if s.open_routes == *open => s.to_hr = *d,
            _ => stages.push(Stage {
                from_hr: *d,
                to_hr: *d,
                open_routes: open.clone(),
            }),
        }
    }

    Ok(ActivationPlan {
        response_rate,
        durations_hr: durations.to_vec(),
        cells,
        thresholds_hr,
        open_by_duration,
        stages,
    })
}

/// One response rate's outcome, summarised per route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub response_rate: f64,
    pub macro_left_from_hr: Option<f64>,
    pub macro_right_from_hr: Option<f64>,
    pub micro_from_hr: Option<f64>,
    pub lines: Vec<String>,
}

fn when(from: Option<f64>, first: f64) -> String {
    match from {
        None => "not activated".into(),
        Some(d) if d <= first => "activate immediately".into(),
        Some(d) => format!("activate after {d} h"),
    }
}

impl SweepRow {
    fn from_plan(plan: &ActivationPlan) -> Self {
        let first = plan.durations_hr[0];
        let left = plan.opens_at("macro_left");
        let right = plan.opens_at("macro_right");
        let micro = plan.opens_at("micro");
        let mut lines = Vec::new();
        if left == right {
            lines.push(format!("left and right macro routes: {}", when(left, first)));
        } else {
            lines.push(format!("left macro route: {}", when(left, first)));
            lines.push(format!("right macro route: {}", when(right, first)));
        }
        lines.push(format!("micro route: {}", when(micro, first)));
        SweepRow {
            response_rate: plan.response_rate,
            macro_left_from_hr: left,
            macro_right_from_hr: right,
            micro_from_hr: micro,
            lines,
        }
    }
}

/// Runs [`activation_plan`] for each rate, in input order.
pub fn response_sweep(rates: &[f64], durations: &[f64], times: &dyn TravelTimes) -> Result<Vec<SweepRow>> {
    rates
        .iter()
        .map(|&r| activation_plan(durations, r, times).map(|p| SweepRow::from_plan(&p)))
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "response_rate",
        "macro_left_from_hr",
        "macro_right_from_hr",
        "micro_from_hr",
        "summary",
    ])
    .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.response_rate.to_string(),
            opt(r.macro_left_from_hr),
            opt(r.macro_right_from_hr),
            opt(r.micro_from_hr),
            r.lines.join("; "),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

/// The closure durations evaluated for the A1 scenario, hours.
pub const A1_DURATIONS_HR: [f64; 6] = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
