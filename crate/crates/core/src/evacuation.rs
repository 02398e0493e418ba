//! Staged-departure evacuation to exit points.
//!
//! Zones are allocated to exits, their vehicles are released in timed
//! slices, and a point-queue loader moves them through the network in
//! one-minute steps until every vehicle has left.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::assignment::{costs_tie, csv_err, free_flow_costs_from, shortest_path, ClassFilter};
use crate::error::{Error, Result};
use crate::flowtime::{segment_time, SpeedFlowParams};
use crate::netmodel::{validate_zones, ExitPoint, Network, OdMatrix, Zone};

/// Half the vehicles leave in the second slot.
pub const PROFILE_LATE_PEAK: [f64; 4] = [0.20, 0.50, 0.20, 0.10];
/// A prepared share leaves at once.
pub const PROFILE_EARLY_START: [f64; 4] = [0.40, 0.10, 0.30, 0.20];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepartureProfile {
    pub fractions: Vec<f64>,
    pub slot_minutes: u32,
}

impl DepartureProfile {
    pub fn new(fractions: &[f64], slot_minutes: u32) -> Result<Self> {
        let p = DepartureProfile {
            fractions: fractions.to_vec(),
            slot_minutes,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fractions.is_empty() || self.fractions.iter().any(|f| !(*f >= 0.0)) {
            return Err(Error::invalid("departure fractions must be nonnegative"));
        }
        let sum: f64 = self.fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("departure fractions sum to {sum}, not 1")));
        }
        if self.slot_minutes == 0 {
            return Err(Error::invalid("departure slot length must be > 0"));
        }
        Ok(())
    }
}

/// One car per household, limited by the cars actually available.
pub fn derive_fleet(
    population: u64,
    in_town_fraction: f64,
    households: u64,
    registered_vehicles: u64,
) -> Result<u64> {
    if !(0.0..=1.0).contains(&in_town_fraction) {
        return Err(Error::invalid(format!(
            "in-town fraction {in_town_fraction} outside [0, 1]"
        )));
    }
    if households > population {
        return Err(Error::invalid("more households than residents"));
    }
    Ok(households.min(registered_vehicles))
}

/// Zone id to exit id.
pub type Allocation = BTreeMap<String, String>;

fn exit_costs(net: &Network, zone: &Zone, exits: &[ExitPoint]) -> Result<Vec<f64>> {
    let dist = free_flow_costs_from(net, &zone.node, &ClassFilter::any())?;
    Ok(exits
        .iter()
        .map(|e| dist[net.node_idx(&e.node).expect("validated exit node")])
        .collect())
}

fn sorted_exits(exits: &[ExitPoint]) -> Vec<ExitPoint> {
    let mut v = exits.to_vec();
    v.sort_by(|a, b| a.id.cmp(&b.id));
    v
}

/// Each zone goes to its lowest free-flow-time exit; ties go to the smaller
/// exit id.
pub fn allocate_nearest(net: &Network, zones: &[Zone], exits: &[ExitPoint]) -> Result<Allocation> {
    validate_zones(net, zones, exits)?;
    let exits = sorted_exits(exits);
    let mut out = Allocation::new();
    for z in zones {
        let costs = exit_costs(net, z, &exits)?;
        let mut best: Option<(usize, f64)> = None;
        for (i, &c) in costs.iter().enumerate() {
            if !c.is_finite() {
                continue;
            }
            match best {
                Some((_, b)) if c > b || costs_tie(c, b) => {}
                _ => best = Some((i, c)),
            }
        }
        let (i, _) = best.ok_or_else(|| Error::UnreachableZone(z.id.clone()))?;
        out.insert(z.id.clone(), exits[i].id.clone());
    }
    Ok(out)
}

/// Greedy whole-zone balancing: largest zones first, each to the currently
/// least-loaded exit it can reach. Ties go to the smaller exit id.
pub fn allocate_balanced(net: &Network, zones: &[Zone], exits: &[ExitPoint]) -> Result<Allocation> {
    validate_zones(net, zones, exits)?;
    let exits = sorted_exits(exits);
    let mut order: Vec<&Zone> = zones.iter().collect();
    order.sort_by(|a, b| b.vehicles.cmp(&a.vehicles).then_with(|| a.id.cmp(&b.id)));
    let mut load = vec![0u64; exits.len()];
    let mut out = Allocation::new();
    for z in order {
        let costs = exit_costs(net, z, &exits)?;
        let i = (0..exits.len())
            .filter(|&i| costs[i].is_finite())
            .min_by_key(|&i| (load[i], i))
            .ok_or_else(|| Error::UnreachableZone(z.id.clone()))?;
        load[i] += z.vehicles;
        out.insert(z.id.clone(), exits[i].id.clone());
    }
    Ok(out)
}

/// Replaces the exit of selected zones.
pub fn allocate_override(
    base: &Allocation,
    overrides: &BTreeMap<String, String>,
    exits: &[ExitPoint],
) -> Result<Allocation> {
    let mut out = base.clone();
    for (zone, exit) in overrides {
        if !exits.iter().any(|e| e.id == *exit) {
            return Err(Error::UnknownExit(exit.clone()));
        }
        let slot = out
            .get_mut(zone)
            .ok_or_else(|| Error::UnknownZone(zone.clone()))?;
        *slot = exit.clone();
    }
    Ok(out)
}

/// Vehicles per exit under an allocation. Every exit appears.
pub fn exit_loads(alloc: &Allocation, zones: &[Zone], exits: &[ExitPoint]) -> BTreeMap<String, u64> {
    let mut loads: BTreeMap<String, u64> = exits.iter().map(|e| (e.id.clone(), 0)).collect();
    for z in zones {
        if let Some(e) = alloc.get(&z.id) {
            *loads.entry(e.clone()).or_insert(0) += z.vehicles;
        }
    }
    loads
}

/// Splits `total` into integer parts proportional to `fractions` with
/// largest-remainder rounding. Equal remainders favour earlier parts.
pub fn largest_remainder(total: u64, fractions: &[f64]) -> Vec<u64> {
    let exact: Vec<f64> = fractions.iter().map(|f| f * total as f64).collect();
    let mut parts: Vec<u64> = exact.iter().map(|x| x.floor() as u64).collect();
    let assigned: u64 = parts.iter().sum();
    if assigned > total {
        // float overshoot: trim from the smallest remainders
        let mut idx: Vec<usize> = (0..parts.len()).collect();
        idx.sort_by(|&a, &b| (exact[a] - exact[a].floor()).total_cmp(&(exact[b] - exact[b].floor())));
        let mut extra = assigned - total;
        for i in idx.into_iter().cycle() {
            if extra == 0 {
                break;
            }
            if parts[i] > 0 {
                parts[i] -= 1;
                extra -= 1;
            }
        }
        return parts;
    }
    let mut idx: Vec<usize> = (0..parts.len()).collect();
    idx.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in idx.iter().cycle().take((total - assigned) as usize) {
        parts[i] += 1;
    }
    parts
}

/// Vehicles of one zone heading to one exit within a slice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trip {
    pub zone: String,
    pub origin: String,
    pub exit: String,
    pub exit_node: String,
    pub vehicles: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemandSlice {
    pub offset_min: u32,
    pub trips: Vec<Trip>,
}

impl DemandSlice {
    pub fn od(&self) -> OdMatrix {
        let mut od = OdMatrix::new(format!("+{}min", self.offset_min));
        for t in &self.trips {
            od.add(&t.origin, &t.exit_node, t.vehicles as f64)
                .expect("vehicle counts are nonnegative");
        }
        od
    }

    pub fn vehicles(&self) -> u64 {
        self.trips.iter().map(|t| t.vehicles).sum()
    }
}

/// Time-sliced demand: slice `k` starts `k * slot_minutes` after the order
/// and carries fraction `k` of every zone's vehicles.
pub fn staged_od(
    alloc: &Allocation,
    zones: &[Zone],
    exits: &[ExitPoint],
    profile: &DepartureProfile,
) -> Result<Vec<DemandSlice>> {
    profile.validate()?;
    let mut slices: Vec<DemandSlice> = (0..profile.fractions.len())
        .map(|k| DemandSlice {
            offset_min: k as u32 * profile.slot_minutes,
            trips: Vec::new(),
        })
        .collect();
    let mut sorted: Vec<&Zone> = zones.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    for z in sorted {
        let exit_id = alloc
            .get(&z.id)
            .ok_or_else(|| Error::UnknownZone(z.id.clone()))?;
        let exit = exits
            .iter()
            .find(|e| e.id == *exit_id)
            .ok_or_else(|| Error::UnknownExit(exit_id.clone()))?;
        for (slice, n) in slices.iter_mut().zip(largest_remainder(z.vehicles, &profile.fractions)) {
            slice.trips.push(Trip {
                zone: z.id.clone(),
                origin: z.node.clone(),
                exit: exit.id.clone(),
                exit_node: exit.node.clone(),
                vehicles: n,
            });
        }
    }
    Ok(slices)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub horizon_min: u32,
    pub speed: SpeedFlowParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            horizon_min: 12 * 60,
            speed: SpeedFlowParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvacResult {
    /// First whole minute at which no evacuee remains in the network.
    pub clearance_time_min: u32,
    pub total_vehicles: u64,
    pub per_exit: BTreeMap<String, u64>,
    /// Vehicles in the network at each minute, index = minute.
    #[serde(skip)]
    pub in_network: Vec<u64>,
    #[serde(skip)]
    pub exited_total: Vec<u64>,
    #[serde(skip)]
    pub exited_by_exit: BTreeMap<String, Vec<u64>>,
}

impl EvacResult {
    /// Clearance as `h:mm`.
    pub fn clearance_hm(&self) -> String {
        format!("{}:{:02}", self.clearance_time_min / 60, self.clearance_time_min % 60)
    }

    pub fn write_series_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t_min".to_string(), "in_network".into(), "exited_total".into()];
        header.extend(self.exited_by_exit.keys().map(|e| format!("exited_{e}")));
        w.write_record(&header).map_err(csv_err)?;
        for m in 0..self.in_network.len() {
            let mut row = vec![
                m.to_string(),
                self.in_network[m].to_string(),
                self.exited_total[m].to_string(),
            ];
            row.extend(self.exited_by_exit.values().map(|s| s[m].to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }
}

struct Vehicle {
    route: usize,
    pos: usize,
    ready: f64,
}

#[derive(Default)]
struct LinkState {
    fifo: VecDeque<usize>,
    credit: f64,
}

/// Point-queue loading in one-minute steps.
///
/// Each step: link travel times are fixed from the occupancy at the start of
/// the step (occupancy converted to an hourly flow through the free-flow
/// time), released vehicles enter their first link, then every link in id
/// order discharges ready vehicles from the head of its FIFO at most at its
/// capacity. Vehicles moving on enter the next link after all links have
/// discharged, interleaved round-robin over the links they come from.
pub fn simulate_evacuation(net: &Network, slices: &[DemandSlice], cfg: &SimConfig) -> Result<EvacResult> {
    // routes per (origin node, exit node)
    let mut route_ids: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut routes: Vec<Vec<usize>> = Vec::new();
    let mut exit_ids: BTreeMap<String, usize> = BTreeMap::new();
    for s in slices {
        for t in &s.trips {
            let n = exit_ids.len();
            exit_ids.entry(t.exit.clone()).or_insert(n);
            let key = (t.origin.clone(), t.exit_node.clone());
            if route_ids.contains_key(&key) {
                continue;
            }
            let links = if t.origin == t.exit_node {
                net.require_node(&t.origin)?;
                Vec::new()
            } else {
                shortest_path(net, &t.origin, &t.exit_node, &ClassFilter::any())?
                    .links
                    .iter()
                    .map(|id| net.link_idx(id).unwrap())
                    .collect()
            };
            route_ids.insert(key, routes.len());
            routes.push(links);
        }
    }
    // exit index order follows exit id order
    let exit_names: Vec<String> = exit_ids.keys().cloned().collect();
    let exit_of = |name: &str| exit_names.binary_search_by(|e| e.as_str().cmp(name)).unwrap();

    let mut order: Vec<&DemandSlice> = slices.iter().collect();
    order.sort_by_key(|s| s.offset_min);
    let total: u64 = slices.iter().map(DemandSlice::vehicles).sum();

    let mut vehicles: Vec<Vehicle> = Vec::with_capacity(total as usize);
    let mut vehicle_exit: Vec<usize> = Vec::with_capacity(total as usize);
    let mut links: Vec<LinkState> = (0..net.links().len()).map(|_| LinkState::default()).collect();
    let mut on_links: u64 = 0;
    let mut released: u64 = 0;
    // (minute at which the exit is counted, exit index)
    let mut exits_at: Vec<(u32, usize)> = Vec::with_capacity(total as usize);
    let mut injected_at: Vec<(u32, u64)> = Vec::new();
    let mut next_slice = 0;

    let travel_time = |li: usize, occupancy: usize| {
        let l = &net.links()[li];
        let q = occupancy as f64 * 60.0 / l.free_flow_min();
        let p = SpeedFlowParams {
            lane_width_m: l.lane_width_m,
            ..cfg.speed
        };
        segment_time(l.length_km, q, l.free_flow_kmh, l.lanes, &p)
    };

    let mut t: u32 = 0;
    loop {
        if next_slice == order.len() && on_links == 0 {
            break;
        }
        if t > cfg.horizon_min {
            return Err(Error::SimulationHorizon {
                horizon_min: cfg.horizon_min,
            });
        }
        let now = t as f64;
        let occupancy: Vec<usize> = links.iter().map(|l| l.fifo.len()).collect();

        while next_slice < order.len() && order[next_slice].offset_min == t {
            let s = order[next_slice];
            let mut sorted: Vec<&Trip> = s.trips.iter().collect();
            sorted.sort_by(|a, b| (&a.zone, &a.exit).cmp(&(&b.zone, &b.exit)));
            for trip in sorted {
                let route = route_ids[&(trip.origin.clone(), trip.exit_node.clone())];
                let e = exit_of(&trip.exit);
                for _ in 0..trip.vehicles {
                    released += 1;
                    if routes[route].is_empty() {
                        exits_at.push((t, e));
                        continue;
                    }
                    let li = routes[route][0];
                    let id = vehicles.len();
                    vehicles.push(Vehicle {
                        route,
                        pos: 0,
                        ready: now + travel_time(li, occupancy[li]),
                    });
                    vehicle_exit.push(e);
                    links[li].fifo.push_back(id);
                    on_links += 1;
                }
            }
            injected_at.push((t, released));
            next_slice += 1;
        }
        if next_slice < order.len() && order[next_slice].offset_min < t {
            // offsets are whole minutes and visited in order
            unreachable!("slice offsets are processed in order");
        }

        // discharge: moves[target] holds (source link, vehicle, departure)
        let mut moves: BTreeMap<usize, Vec<(usize, usize, f64)>> = BTreeMap::new();
        for (li, state) in links.iter_mut().enumerate() {
            if state.fifo.is_empty() {
                state.credit = 0.0;
                continue;
            }
            let per_step = net.links()[li].capacity_vph / 60.0;
            state.credit = (state.credit + per_step).min(per_step.max(1.0));
            let mut k = 0u32;
            while state.credit >= 1.0 {
                let Some(&v) = state.fifo.front() else { break };
                if vehicles[v].ready > now {
                    break;
                }
                state.fifo.pop_front();
                state.credit -= 1.0;
                k += 1;
                let departure = now + (k as f64 / per_step).min(1.0);
                let veh = &mut vehicles[v];
                veh.pos += 1;
                if veh.pos == routes[veh.route].len() {
                    exits_at.push((departure.ceil() as u32, vehicle_exit[v]));
                    on_links -= 1;
                } else {
                    let next = routes[veh.route][veh.pos];
                    moves.entry(next).or_default().push((li, v, departure));
                }
            }
        }
        for (target, incoming) in moves {
            let tt = travel_time(target, occupancy[target]);
            let mut by_source: BTreeMap<usize, VecDeque<(usize, f64)>> = BTreeMap::new();
            for (src, v, dep) in incoming {
                by_source.entry(src).or_default().push_back((v, dep));
            }
            while !by_source.is_empty() {
                by_source.retain(|_, q| {
                    if let Some((v, dep)) = q.pop_front() {
                        vehicles[v].ready = dep + tt;
                        links[target].fifo.push_back(v);
                    }
                    !q.is_empty()
                });
            }
        }
        t += 1;
    }

    let clearance = exits_at.iter().map(|(m, _)| *m).max().unwrap_or(0);
    let len = clearance as usize + 1;
    let mut exited_step = vec![0u64; len];
    let mut by_exit_step = vec![vec![0u64; len]; exit_names.len()];
    for &(m, e) in &exits_at {
        exited_step[m as usize] += 1;
        by_exit_step[e][m as usize] += 1;
    }
    let mut released_at = vec![0u64; len];
    // empty slices may be released after the last exit
    for &(m, cum) in injected_at.iter().filter(|(m, _)| (*m as usize) < len) {
        released_at[m as usize] = cum;
    }
    let mut in_network = Vec::with_capacity(len);
    let mut exited_total = Vec::with_capacity(len);
    let (mut out_acc, mut in_acc) = (0u64, 0u64);
    for m in 0..len {
        out_acc += exited_step[m];
        in_acc = in_acc.max(released_at[m]);
        exited_total.push(out_acc);
        in_network.push(in_acc - out_acc);
    }
    let exited_by_exit: BTreeMap<String, Vec<u64>> = exit_names
        .iter()
        .zip(by_exit_step)
        .map(|(name, steps)| {
            let mut acc = 0;
            (name.clone(), steps.into_iter().map(|s| { acc += s; acc }).collect())
        })
        .collect();
    let per_exit = exited_by_exit
        .iter()
        .map(|(k, v)| (k.clone(), *v.last().unwrap()))
        .collect();

    Ok(EvacResult {
        clearance_time_min: clearance,
        total_vehicles: total,
        per_exit,
        in_network,
        exited_total,
        exited_by_exit,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Nearest,
    Balanced,
    Override,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Nearest => "nearest",
            Strategy::Balanced => "balanced",
            Strategy::Override => "override",
        }
    }
}

fn default_strategies() -> Vec<Strategy> {
    vec![Strategy::Nearest, Strategy::Balanced, Strategy::Override]
}

fn default_slot() -> u32 {
    15
}

fn default_profiles() -> Vec<Vec<f64>> {
    vec![PROFILE_LATE_PEAK.to_vec(), PROFILE_EARLY_START.to_vec()]
}

/// Evacuation scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvacScenario {
    /// Network file, relative to the scenario file.
    #[serde(default)]
    pub network: Option<String>,
    pub zones: Vec<Zone>,
    pub exits: Vec<ExitPoint>,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    /// Zone to exit changes applied on top of the balanced allocation.
    #[serde(default)]
    pub overrides: BTreeMap<String, String>,
    #[serde(default = "default_profiles")]
    pub profiles: Vec<Vec<f64>>,
    #[serde(default = "default_slot")]
    pub slot_minutes: u32,
    #[serde(default)]
    pub sim: SimConfig,
}

impl EvacScenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: EvacScenario = serde_json::from_str(text).map_err(|e| Error::Parse {
            context: "evacuation scenario".into(),
            message: e.to_string(),
        })?;
        for f in &s.profiles {
            DepartureProfile::new(f, s.slot_minutes)?;
        }
        Ok(s)
    }

    pub fn allocation(&self, net: &Network, strategy: Strategy) -> Result<Allocation> {
        match strategy {
            Strategy::Nearest => allocate_nearest(net, &self.zones, &self.exits),
            Strategy::Balanced => allocate_balanced(net, &self.zones, &self.exits),
            Strategy::Override => allocate_override(
                &allocate_balanced(net, &self.zones, &self.exits)?,
                &self.overrides,
                &self.exits,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRun {
    pub strategy: Strategy,
    /// 1-based index into the scenario's profiles.
    pub profile: usize,
    pub allocated: BTreeMap<String, u64>,
    pub result: EvacResult,
}

/// Every strategy against every departure profile, strategy-major.
pub fn run_scenarios(net: &Network, scenario: &EvacScenario) -> Result<Vec<ScenarioRun>> {
    let mut runs = Vec::new();
    for &strategy in &scenario.strategies {
        let alloc = scenario.allocation(net, strategy)?;
        let allocated = exit_loads(&alloc, &scenario.zones, &scenario.exits);
        for (i, fractions) in scenario.profiles.iter().enumerate() {
            let profile = DepartureProfile::new(fractions, scenario.slot_minutes)?;
            let slices = staged_od(&alloc, &scenario.zones, &scenario.exits, &profile)?;
            runs.push(ScenarioRun {
                strategy,
                profile: i + 1,
                allocated: allocated.clone(),
                result: simulate_evacuation(net, &slices, &scenario.sim)?,
            });
        }
    }
    Ok(runs)
}
