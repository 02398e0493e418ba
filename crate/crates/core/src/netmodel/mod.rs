//! Road network, closures, zones and OD demand.
//!
//! A [`Network`] is immutable once built. Closures never mutate it in place;
//! [`apply_closure`] returns a fresh snapshot with the affected links and
//! barrier nodes switched off.

mod geojson;
mod od;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use self::geojson::{
    haversine_km, load_network, parse_network, polyline_length_km, save_network, to_geojson,
    LengthWarning, LENGTH_MISMATCH_RATIO,
};
pub use self::od::{load_od, read_od, OdMatrix};

/// Working lane width used when a link does not declare one.
pub const DEFAULT_LANE_WIDTH_M: f64 = 3.5;

/// Free-flow speeds must stay above the speed-flow floor.
pub const MIN_FREE_FLOW_KMH: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoadClass {
    Highway,
    Local,
}

impl RoadClass {
    pub fn as_str(self) -> &'static str {
        match self {
            RoadClass::Highway => "highway",
            RoadClass::Local => "local",
        }
    }
}

impl std::str::FromStr for RoadClass {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s {
            "highway" => Ok(RoadClass::Highway),
            "local" => Ok(RoadClass::Local),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    /// `[lon, lat]` in WGS84 degrees.
    pub coord: Option<[f64; 2]>,
}

impl Node {
    pub fn new(id: impl Into<String>) -> Self {
        Node {
            id: id.into(),
            coord: None,
        }
    }

    pub fn at(id: impl Into<String>, lon: f64, lat: f64) -> Self {
        Node {
            id: id.into(),
            coord: Some([lon, lat]),
        }
    }
}

/// A directed road segment. Two-way roads are two links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: String,
    pub from_node: String,
    pub to_node: String,
    pub length_km: f64,
    pub lanes: u32,
    pub lane_width_m: f64,
    pub free_flow_kmh: f64,
    pub capacity_vph: f64,
    pub road_class: RoadClass,
    pub closed: bool,
    /// Polyline as `[lon, lat]` vertices, kept for export.
    pub geometry: Option<Vec<[f64; 2]>>,
}

impl Link {
    /// A link with default lane width, open, no geometry.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: impl Into<String>,
        from_node: impl Into<String>,
        to_node: impl Into<String>,
        length_km: f64,
        lanes: u32,
        free_flow_kmh: f64,
        capacity_vph: f64,
        road_class: RoadClass,
    ) -> Self {
        Link {
            id: id.into(),
            from_node: from_node.into(),
            to_node: to_node.into(),
            length_km,
            lanes,
            lane_width_m: DEFAULT_LANE_WIDTH_M,
            free_flow_kmh,
            capacity_vph,
            road_class,
            closed: false,
            geometry: None,
        }
    }

    /// Free-flow traversal time in minutes.
    pub fn free_flow_min(&self) -> f64 {
        60.0 * self.length_km / self.free_flow_kmh
    }

    pub fn validate(&self) -> Result<()> {
        let check = |attribute: &str, ok: bool, requirement: &str, value: String| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidAttribute {
                    feature: self.id.clone(),
                    attribute: attribute.to_string(),
                    requirement: requirement.to_string(),
                    value,
                })
            }
        };
        check(
            "length_km",
            self.length_km > 0.0 && self.length_km.is_finite(),
            "> 0",
            self.length_km.to_string(),
        )?;
        check("lanes", self.lanes >= 1, ">= 1", self.lanes.to_string())?;
        check(
            "lane_width_m",
            self.lane_width_m > 0.0 && self.lane_width_m.is_finite(),
            "> 0",
            self.lane_width_m.to_string(),
        )?;
        check(
            "free_flow_kmh",
            self.free_flow_kmh > MIN_FREE_FLOW_KMH && self.free_flow_kmh.is_finite(),
            "> 5",
            self.free_flow_kmh.to_string(),
        )?;
        check(
            "capacity_vph",
            self.capacity_vph > 0.0 && self.capacity_vph.is_finite(),
            "> 0",
            self.capacity_vph.to_string(),
        )
    }
}

/// Directed road graph. Nodes and links are kept sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    nodes: Vec<Node>,
    links: Vec<Link>,
    node_index: HashMap<String, usize>,
    link_index: HashMap<String, usize>,
    outgoing: Vec<Vec<usize>>,
    barriers: BTreeSet<String>,
}

impl Network {
    pub fn new(mut nodes: Vec<Node>, mut links: Vec<Link>) -> Result<Self> {
        nodes.sort_by(|a, b| a.id.cmp(&b.id));
        links.sort_by(|a, b| a.id.cmp(&b.id));

        let mut node_index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if node_index.insert(n.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(n.id.clone()));
            }
        }
        let mut link_index = HashMap::with_capacity(links.len());
        let mut outgoing = vec![Vec::new(); nodes.len()];
        for (i, l) in links.iter().enumerate() {
            if link_index.insert(l.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(l.id.clone()));
            }
            l.validate()?;
            let from = *node_index
                .get(&l.from_node)
                .ok_or_else(|| Error::DanglingEndpoint {
                    link: l.id.clone(),
                    endpoint: l.from_node.clone(),
                })?;
            if !node_index.contains_key(&l.to_node) {
                return Err(Error::DanglingEndpoint {
                    link: l.id.clone(),
                    endpoint: l.to_node.clone(),
                });
            }
            outgoing[from].push(i);
        }

        Ok(Network {
            nodes,
            links,
            node_index,
            link_index,
            outgoing,
            barriers: BTreeSet::new(),
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.node_index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn link(&self, id: &str) -> Option<&Link> {
        self.link_index.get(id).map(|&i| &self.links[i])
    }

    pub fn node_idx(&self, id: &str) -> Option<usize> {
        self.node_index.get(id).copied()
    }

    pub fn link_idx(&self, id: &str) -> Option<usize> {
        self.link_index.get(id).copied()
    }

    pub(crate) fn require_node(&self, id: &str) -> Result<usize> {
        self.node_idx(id)
            .ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    /// Outgoing link indices of a node, in link-id order.
    pub fn outgoing(&self, node: usize) -> &[usize] {
        &self.outgoing[node]
    }

    pub fn barriers(&self) -> &BTreeSet<String> {
        &self.barriers
    }

    pub fn is_barrier(&self, node: &str) -> bool {
        self.barriers.contains(node)
    }

    /// A link can carry traffic when it is open and touches no barrier node.
    pub fn is_usable(&self, link: usize) -> bool {
        let l = &self.links[link];
        !l.closed && !self.is_barrier(&l.from_node) && !self.is_barrier(&l.to_node)
    }

    /// Nodes reachable from `origin` over usable links.
    pub fn reachable_from(&self, origin: usize) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![origin];
        seen[origin] = true;
        while let Some(u) = stack.pop() {
            for &li in &self.outgoing[u] {
                if !self.is_usable(li) {
                    continue;
                }
                let v = self.node_index[&self.links[li].to_node];
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }

    /// Checks that every OD pair with an entry has an open path.
    pub fn validate_demand(&self, od: &OdMatrix) -> Result<()> {
        let mut cache: HashMap<usize, Vec<bool>> = HashMap::new();
        for (o, d) in od.entries().keys() {
            let oi = self.require_node(o)?;
            let di = self.require_node(d)?;
            let reach = cache.entry(oi).or_insert_with(|| self.reachable_from(oi));
            if !reach[di] {
                return Err(Error::NoPath {
                    origin: o.clone(),
                    destination: d.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Link closure with optional point barriers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosureScenario {
    pub closed_link_ids: Vec<String>,
    /// Clock time at which the closure begins, in hours of day.
    #[serde(default = "default_start_clock")]
    pub start_clock: f64,
    pub duration_hr: f64,
    #[serde(default)]
    pub barrier_node_ids: Vec<String>,
}

fn default_start_clock() -> f64 {
    12.0
}

impl ClosureScenario {
    pub fn new(closed: &[&str], duration_hr: f64) -> Self {
        ClosureScenario {
            closed_link_ids: closed.iter().map(|s| s.to_string()).collect(),
            start_clock: default_start_clock(),
            duration_hr,
            barrier_node_ids: Vec::new(),
        }
    }

    pub fn with_barriers(mut self, barriers: &[&str]) -> Self {
        self.barrier_node_ids = barriers.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        if self.closed_link_ids.is_empty() {
            return Err(Error::invalid("closure lists no links"));
        }
        if !(self.duration_hr > 0.0) {
            return Err(Error::invalid(format!(
                "closure duration must be > 0, got {}",
                self.duration_hr
            )));
        }
        for id in &self.closed_link_ids {
            net.link(id).ok_or_else(|| Error::UnknownLink(id.clone()))?;
        }
        for id in &self.barrier_node_ids {
            net.require_node(id)?;
        }
        Ok(())
    }
}

/// Returns a copy of `net` with the closure applied. `net` is untouched.
pub fn apply_closure(net: &Network, closure: &ClosureScenario) -> Result<Network> {
    closure.validate(net)?;
    let mut out = net.clone();
    for id in &closure.closed_link_ids {
        let i = out.link_index[id];
        out.links[i].closed = true;
    }
    out.barriers
        .extend(closure.barrier_node_ids.iter().cloned());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Zone {
    pub id: String,
    pub node: String,
    pub vehicles: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExitPoint {
    pub id: String,
    pub node: String,
}

pub fn validate_zones(net: &Network, zones: &[Zone], exits: &[ExitPoint]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for z in zones {
        if !seen.insert(&z.id) {
            return Err(Error::DuplicateId(z.id.clone()));
        }
        net.require_node(&z.node)?;
    }
    let mut seen = BTreeSet::new();
    for e in exits {
        if !seen.insert(&e.id) {
            return Err(Error::DuplicateId(e.id.clone()));
        }
        net.require_node(&e.node)?;
    }
    Ok(())
}
