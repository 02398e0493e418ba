//! Shared helpers for integration tests: random networks and brute-force
//! path oracles.

#![allow(dead_code)]

use std::collections::BTreeMap;

use detour::netmodel::{Link, Network, Node, OdMatrix, RoadClass};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random directed multigraph with integer kilometre lengths at 60 km/h, so
/// free-flow minutes are exact integers and equal-cost ties are common.
pub fn random_network(rng: &mut ChaCha8Rng, max_nodes: usize, max_links: usize) -> Network {
    let n = rng.gen_range(2..=max_nodes);
    let m = rng.gen_range(1..=max_links);
    let nodes: Vec<Node> = (0..n).map(|i| Node::new(format!("v{i}"))).collect();
    let links: Vec<Link> = (0..m)
        .map(|k| {
            let a = rng.gen_range(0..n);
            let mut b = rng.gen_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            let class = if rng.gen_bool(0.5) { RoadClass::Highway } else { RoadClass::Local };
            Link::new(
                format!("l{k:02}"),
                format!("v{a}"),
                format!("v{b}"),
                rng.gen_range(1..=5) as f64,
                1,
                60.0,
                1000.0,
                class,
            )
        })
        .collect();
    Network::new(nodes, links).unwrap()
}

/// Every simple path from `o` to `d`, as link-id sequences with their cost.
pub fn simple_paths(net: &Network, o: &str, d: &str) -> Vec<(f64, Vec<String>)> {
    fn walk(
        net: &Network,
        at: &str,
        d: &str,
        seen: &mut Vec<String>,
        links: &mut Vec<String>,
        cost: f64,
        out: &mut Vec<(f64, Vec<String>)>,
    ) {
        if at == d {
            out.push((cost, links.clone()));
            return;
        }
        for l in net.links() {
            if l.from_node != at || seen.contains(&l.to_node) {
                continue;
            }
            seen.push(l.to_node.clone());
            links.push(l.id.clone());
            walk(net, &l.to_node, d, seen, links, cost + l.free_flow_min(), out);
            links.pop();
            seen.pop();
        }
    }
    let mut out = Vec::new();
    walk(net, o, d, &mut vec![o.to_string()], &mut Vec::new(), 0.0, &mut out);
    out
}

/// Least-cost simple path, ties broken by the lexicographically smallest
/// link-id sequence.
pub fn brute_force_path(net: &Network, o: &str, d: &str) -> Option<(f64, Vec<String>)> {
    simple_paths(net, o, d)
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)))
}

/// Random OD matrix over reachable pairs.
pub fn random_od(rng: &mut ChaCha8Rng, net: &Network, max_pairs: usize) -> OdMatrix {
    let ids: Vec<String> = net.nodes().iter().map(|n| n.id.clone()).collect();
    let mut reachable = Vec::new();
    for o in &ids {
        for d in &ids {
            if o != d && brute_force_path(net, o, d).is_some() {
                reachable.push((o.clone(), d.clone()));
            }
        }
    }
    let mut od = OdMatrix::new("static");
    if reachable.is_empty() {
        return od;
    }
    for _ in 0..rng.gen_range(1..=max_pairs) {
        let (o, d) = &reachable[rng.gen_range(0..reachable.len())];
        od.add(o, d, rng.gen_range(1..=40) as f64 * 25.0).unwrap();
    }
    od
}

/// All-or-nothing flows from the brute-force oracle.
pub fn brute_force_aon(net: &Network, od: &OdMatrix) -> BTreeMap<String, f64> {
    let mut flows: BTreeMap<String, f64> = net.links().iter().map(|l| (l.id.clone(), 0.0)).collect();
    for ((o, d), q) in od.entries() {
        let (_, path) = brute_force_path(net, o, d).expect("pair is reachable");
        for id in path {
            *flows.get_mut(&id).unwrap() += q;
        }
    }
    flows
}

pub fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}
