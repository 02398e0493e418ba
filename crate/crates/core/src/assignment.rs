//! Shortest paths, all-or-nothing loading and disruption analysis.
//!
//! Link cost is free-flow travel time. Among equal-cost paths the one with
//! the lexicographically smallest sequence of link ids wins, so results do not
//! depend on hash order or platform.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{apply_closure, ClosureScenario, Network, OdMatrix, RoadClass};

/// Relative tolerance under which two path costs count as equal.
pub const COST_TIE_EPS: f64 = 1e-9;

/// Road classes a path may use. `None` allows every class.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClassFilter(Option<BTreeSet<RoadClass>>);

impl ClassFilter {
    pub fn any() -> Self {
        ClassFilter(None)
    }

    pub fn only(class: RoadClass) -> Self {
        ClassFilter(Some([class].into_iter().collect()))
    }

    pub fn of(classes: &[RoadClass]) -> Self {
        ClassFilter(Some(classes.iter().copied().collect()))
    }

    pub fn allows(&self, class: RoadClass) -> bool {
        self.0.as_ref().is_none_or(|s| s.contains(&class))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItineraryKind {
    MacroLeft,
    MacroRight,
    Micro,
    Hybrid,
    Main,
}

impl ItineraryKind {
    pub fn class_filter(self) -> ClassFilter {
        match self {
            ItineraryKind::MacroLeft | ItineraryKind::MacroRight => {
                ClassFilter::only(RoadClass::Highway)
            }
            ItineraryKind::Micro => ClassFilter::only(RoadClass::Local),
            ItineraryKind::Hybrid | ItineraryKind::Main => ClassFilter::any(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ItineraryKind::MacroLeft => "macro_left",
            ItineraryKind::MacroRight => "macro_right",
            ItineraryKind::Micro => "micro",
            ItineraryKind::Hybrid => "hybrid",
            ItineraryKind::Main => "main",
        }
    }
}

/// A connected directed path of links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Itinerary {
    pub kind: ItineraryKind,
    pub links: Vec<String>,
    pub length_km: f64,
    pub free_flow_min: f64,
}

impl Itinerary {
    /// Builds an itinerary from link ids, checking connectivity, repeats and
    /// the road-class rule of `kind`.
    pub fn from_links(net: &Network, kind: ItineraryKind, links: Vec<String>) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::invalid("itinerary has no links"));
        }
        let filter = kind.class_filter();
        let mut seen = BTreeSet::new();
        let mut length_km = 0.0;
        let mut free_flow_min = 0.0;
        let mut prev: Option<&str> = None;
        for id in &links {
            let l = net.link(id).ok_or_else(|| Error::UnknownLink(id.clone()))?;
            if !seen.insert(id.as_str()) {
                return Err(Error::invalid(format!("itinerary repeats link {id}")));
            }
            if let Some(p) = prev {
                if p != l.from_node {
                    return Err(Error::invalid(format!(
                        "itinerary breaks before link {id}: {p} != {}",
                        l.from_node
                    )));
                }
            }
            if !filter.allows(l.road_class) {
                return Err(Error::invalid(format!(
                    "{} itinerary cannot use {} link {id}",
                    kind.as_str(),
                    l.road_class.as_str()
                )));
            }
            length_km += l.length_km;
            free_flow_min += l.free_flow_min();
            prev = Some(&l.to_node);
        }
        Ok(Itinerary {
            kind,
            links,
            length_km,
            free_flow_min,
        })
    }

    pub fn write_csv<W: Write>(&self, net: &Network, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["seq", "link_id", "length_km"]).map_err(csv_err)?;
        for (i, id) in self.links.iter().enumerate() {
            let l = net.link(id).ok_or_else(|| Error::UnknownLink(id.clone()))?;
            w.write_record([(i + 1).to_string(), id.clone(), l.length_km.to_string()])
                .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Parse {
        context: "csv".into(),
        message: e.to_string(),
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Queued {
    cost: f64,
    node: usize,
}

impl Eq for Queued {}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn passable(net: &Network, link: usize, filter: &ClassFilter) -> bool {
    net.is_usable(link) && filter.allows(net.links()[link].road_class)
}

fn dijkstra(
    n: usize,
    source: usize,
    mut relax: impl FnMut(usize, &mut dyn FnMut(usize, f64)),
) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Queued {
        cost: 0.0,
        node: source,
    });
    while let Some(Queued { cost, node }) = heap.pop() {
        if cost > dist[node] {
            continue;
        }
        relax(node, &mut |next, w| {
            let c = cost + w;
            if c < dist[next] {
                dist[next] = c;
                heap.push(Queued { cost: c, node: next });
            }
        });
    }
    dist
}

/// Free-flow minutes from `origin` to every node over passable links.
pub fn free_flow_costs_from(net: &Network, origin: &str, filter: &ClassFilter) -> Result<Vec<f64>> {
    let source = net.require_node(origin)?;
    Ok(dijkstra(net.nodes().len(), source, |u, push| {
        for &li in net.outgoing(u) {
            if passable(net, li, filter) {
                let l = &net.links()[li];
                push(net.node_idx(&l.to_node).unwrap(), l.free_flow_min());
            }
        }
    }))
}

fn costs_to(net: &Network, target: usize, filter: &ClassFilter) -> Vec<f64> {
    let mut incoming = vec![Vec::new(); net.nodes().len()];
    for (li, l) in net.links().iter().enumerate() {
        if passable(net, li, filter) {
            incoming[net.node_idx(&l.to_node).unwrap()].push(li);
        }
    }
    dijkstra(net.nodes().len(), target, |v, push| {
        for &li in &incoming[v] {
            let l = &net.links()[li];
            push(net.node_idx(&l.from_node).unwrap(), l.free_flow_min());
        }
    })
}

pub(crate) fn costs_tie(a: f64, b: f64) -> bool {
    (a - b).abs() <= COST_TIE_EPS * a.abs().max(b.abs()).max(1.0)
}

/// Minimum free-flow-time path from `origin` to `destination`, returned with
/// kind [`ItineraryKind::Main`].
pub fn shortest_path(
    net: &Network,
    origin: &str,
    destination: &str,
    filter: &ClassFilter,
) -> Result<Itinerary> {
    let o = net.require_node(origin)?;
    let d = net.require_node(destination)?;
    if o == d {
        return Err(Error::invalid(format!(
            "origin and destination are both {origin}"
        )));
    }
    let no_path = || Error::NoPath {
        origin: origin.to_string(),
        destination: destination.to_string(),
    };
    let to_dest = costs_to(net, d, filter);
    if !to_dest[o].is_finite() {
        return Err(no_path());
    }

    // Walk the tight links greedily; outgoing lists are in link-id order, so
    // the first tight link is the lexicographically smallest continuation.
    let mut links = Vec::new();
    let mut length_km = 0.0;
    let mut free_flow_min = 0.0;
    let mut u = o;
    while u != d {
        let next = net.outgoing(u).iter().copied().find(|&li| {
            if !passable(net, li, filter) {
                return false;
            }
            let l = &net.links()[li];
            let v = net.node_idx(&l.to_node).unwrap();
            to_dest[v].is_finite() && costs_tie(to_dest[u], l.free_flow_min() + to_dest[v])
        });
        let li = next.ok_or_else(no_path)?;
        let l = &net.links()[li];
        links.push(l.id.clone());
        length_km += l.length_km;
        free_flow_min += l.free_flow_min();
        u = net.node_idx(&l.to_node).unwrap();
        if links.len() > net.links().len() {
            return Err(no_path());
        }
    }
    Ok(Itinerary {
        kind: ItineraryKind::Main,
        links,
        length_km,
        free_flow_min,
    })
}

/// Flow per link in vehicles per hour, covering every link of a network.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinkFlows(BTreeMap<String, f64>);

impl LinkFlows {
    pub fn zeros(net: &Network) -> Self {
        LinkFlows(net.links().iter().map(|l| (l.id.clone(), 0.0)).collect())
    }

    pub fn from_map(map: BTreeMap<String, f64>) -> Self {
        LinkFlows(map)
    }

    /// Flow on a link; absent links carry nothing.
    pub fn get(&self, link: &str) -> f64 {
        self.0.get(link).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, link: &str, flow: f64) {
        self.0.insert(link.to_string(), flow);
    }

    pub fn add(&mut self, link: &str, flow: f64) {
        *self.0.entry(link.to_string()).or_insert(0.0) += flow;
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.values().sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["link_id", "flow_vph"]).map_err(csv_err)?;
        for (id, f) in &self.0 {
            w.write_record([id.clone(), f.to_string()]).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }
}

/// Loads each OD pair's demand onto its shortest path. Pairs are processed
/// in sorted order, so the result is deterministic.
pub fn aon_assign(net: &Network, od: &OdMatrix, filter: &ClassFilter) -> Result<LinkFlows> {
    let mut flows = LinkFlows::zeros(net);
    for ((o, d), &demand) in od.entries() {
        if o == d {
            continue;
        }
        let path = shortest_path(net, o, d, filter)?;
        for id in &path.links {
            flows.add(id, demand);
        }
    }
    Ok(flows)
}

/// Splits the change between a base and a post-closure loading into the
/// flow that lost its link (`disrupted`) and the flow that gained one
/// (`diverted`).
pub fn disruption_diff(base: &LinkFlows, closed: &LinkFlows) -> Result<(LinkFlows, LinkFlows)> {
    if base.len() != closed.len() || base.0.keys().zip(closed.0.keys()).any(|(a, b)| a != b) {
        return Err(Error::MismatchedLinkSets);
    }
    let mut disrupted = BTreeMap::new();
    let mut diverted = BTreeMap::new();
    for ((id, b), c) in base.0.iter().zip(closed.0.values()) {
        disrupted.insert(id.clone(), (b - c).max(0.0));
        diverted.insert(id.clone(), (c - b).max(0.0));
    }
    Ok((LinkFlows(disrupted), LinkFlows(diverted)))
}

/// Alternative route between two open nodes bracketing a closure, restricted
/// to the road classes implied by `kind`.
pub fn extract_itinerary(
    net: &Network,
    closure: &ClosureScenario,
    start: &str,
    end: &str,
    kind: ItineraryKind,
) -> Result<Itinerary> {
    let closed = apply_closure(net, closure)?;
    for node in [start, end] {
        if closed.is_barrier(node) {
            return Err(Error::invalid(format!("node {node} is behind a barrier")));
        }
    }
    let mut it = shortest_path(&closed, start, end, &kind.class_filter())?;
    it.kind = kind;
    Ok(it)
}
