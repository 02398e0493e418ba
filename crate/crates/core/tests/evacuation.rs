mod common;

use std::collections::BTreeMap;

use common::fixture;
use detour::evacuation::{
    allocate_balanced, allocate_nearest, exit_loads, run_scenarios, simulate_evacuation, staged_od,
    DepartureProfile, EvacScenario, SimConfig, Strategy, PROFILE_EARLY_START, PROFILE_LATE_PEAK,
};
use detour::netmodel::{load_network, ExitPoint, Link, Network, Node, RoadClass, Zone};
use proptest::prelude::*;

fn river_town() -> (Network, EvacScenario) {
    let (net, _) = load_network(fixture("river_town/river_town.geojson")).unwrap();
    let text = std::fs::read_to_string(fixture("river_town/evacuation.json")).unwrap();
    (net, EvacScenario::from_json(&text).unwrap())
}

#[test]
fn river_town_fleet() {
    let (_, sc) = river_town();
    assert_eq!(sc.zones.len(), 48);
    assert_eq!(sc.zones.iter().map(|z| z.vehicles).sum::<u64>(), 1308);
    // zones 5..=17 carry the heaviest loads
    let heavy_min = sc.zones[4..17].iter().map(|z| z.vehicles).min().unwrap();
    let light_max = sc.zones.iter().enumerate().filter(|(i, _)| !(4..17).contains(i)).map(|(_, z)| z.vehicles).max().unwrap();
    assert!(heavy_min > light_max);
}

#[test]
fn override_shifts_exact_zone_counts() {
    let (net, sc) = river_town();
    let base = sc.allocation(&net, Strategy::Balanced).unwrap();
    let moved = sc.allocation(&net, Strategy::Override).unwrap();
    let before = exit_loads(&base, &sc.zones, &sc.exits);
    let after = exit_loads(&moved, &sc.zones, &sc.exits);
    let vehicles: BTreeMap<&str, i64> = sc.zones.iter().map(|z| (z.id.as_str(), z.vehicles as i64)).collect();
    let mut expected: BTreeMap<String, i64> = before.iter().map(|(k, v)| (k.clone(), *v as i64)).collect();
    for (zone, exit) in &sc.overrides {
        *expected.get_mut(&base[zone]).unwrap() -= vehicles[zone.as_str()];
        *expected.get_mut(exit).unwrap() += vehicles[zone.as_str()];
    }
    let after: BTreeMap<String, i64> = after.into_iter().map(|(k, v)| (k, v as i64)).collect();
    assert_eq!(after, expected);
    assert!(!sc.overrides.is_empty());
}

#[test]
fn river_town_runs_are_deterministic_and_conserve() {
    let (net, sc) = river_town();
    let a = run_scenarios(&net, &sc).unwrap();
    let b = run_scenarios(&net, &sc).unwrap();
    assert_eq!(a.len(), 6);
    for (x, y) in a.iter().zip(&b) {
        let (mut bx, mut by) = (Vec::new(), Vec::new());
        x.result.write_series_csv(&mut bx).unwrap();
        y.result.write_series_csv(&mut by).unwrap();
        assert_eq!(bx, by);
        assert_eq!(x.result.per_exit.values().sum::<u64>(), 1308);
        assert_eq!(x.result.per_exit, x.allocated);
        assert_eq!(*x.result.in_network.last().unwrap(), 0);
    }
}

/// 4x3 two-way grid with exits hanging off three sides.
fn grid12() -> (Network, Vec<Zone>, Vec<ExitPoint>) {
    let mut nodes: Vec<Node> = (0..12).map(|i| Node::new(format!("c{i:02}"))).collect();
    let mut links = Vec::new();
    let lengths = [0.4, 0.7, 0.5, 0.9, 0.3, 0.6, 0.8];
    let mut k = 0;
    let mut two_way = |a: usize, b: usize, links: &mut Vec<Link>| {
        let l = lengths[k % lengths.len()];
        k += 1;
        links.push(Link::new(format!("r{a:02}{b:02}"), format!("c{a:02}"), format!("c{b:02}"), l, 1, 40.0, 900.0, RoadClass::Local));
        links.push(Link::new(format!("r{b:02}{a:02}"), format!("c{b:02}"), format!("c{a:02}"), l, 1, 40.0, 900.0, RoadClass::Local));
    };
    for r in 0..3 {
        for c in 0..4 {
            let i = r * 4 + c;
            if c < 3 {
                two_way(i, i + 1, &mut links);
            }
            if r < 2 {
                two_way(i, i + 4, &mut links);
            }
        }
    }
    let exits = [("E1", 0, 0.5), ("E2", 7, 0.2), ("E3", 9, 0.9)];
    for (id, at, l) in exits {
        nodes.push(Node::new(format!("x{id}")));
        links.push(Link::new(format!("out{id}"), format!("c{at:02}"), format!("x{id}"), l, 1, 40.0, 600.0, RoadClass::Local));
    }
    let zones = (0..12).map(|i| Zone { id: format!("z{i:02}"), node: format!("c{i:02}"), vehicles: 10 + i as u64 }).collect();
    let exits = exits.iter().map(|(id, _, _)| ExitPoint { id: id.to_string(), node: format!("x{id}") }).collect();
    (Network::new(nodes, links).unwrap(), zones, exits)
}

#[test]
fn nearest_matches_all_pairs_oracle() {
    let (net, zones, exits) = grid12();
    // Floyd-Warshall over free-flow minutes
    let ids: Vec<&str> = net.nodes().iter().map(|n| n.id.as_str()).collect();
    let n = ids.len();
    let idx = |s: &str| ids.iter().position(|x| *x == s).unwrap();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for l in net.links() {
        let (a, b) = (idx(&l.from_node), idx(&l.to_node));
        d[a][b] = d[a][b].min(l.free_flow_min());
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    let alloc = allocate_nearest(&net, &zones, &exits).unwrap();
    for z in &zones {
        let best = exits
            .iter()
            .map(|e| (d[idx(&z.node)][idx(&e.node)], &e.id))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)))
            .unwrap();
        assert_eq!(&alloc[&z.id], best.1, "zone {}", z.id);
    }
}

#[test]
fn greedy_balance_against_exhaustive_partition() {
    let (net, _, _) = grid12();
    let sizes = [5u64, 4, 3, 2, 1];
    let zones: Vec<Zone> = sizes.iter().enumerate().map(|(i, &v)| Zone { id: format!("z{i}"), node: format!("c{i:02}"), vehicles: v }).collect();
    let exits = vec![
        ExitPoint { id: "E1".into(), node: "xE1".into() },
        ExitPoint { id: "E2".into(), node: "xE2".into() },
    ];
    let loads = exit_loads(&allocate_balanced(&net, &zones, &exits).unwrap(), &zones, &exits);
    let greedy_max = *loads.values().max().unwrap();
    let mut l: Vec<u64> = loads.values().copied().collect();
    l.sort();
    assert_eq!(l, vec![7, 8]);

    let optimum = (0u32..32)
        .map(|mask| {
            let a: u64 = (0..5).filter(|i| mask & (1 << i) != 0).map(|i| sizes[i]).sum();
            a.max(15 - a)
        })
        .min()
        .unwrap();
    assert_eq!(optimum, 8);
    assert!(greedy_max <= optimum + sizes[0]);
    assert_eq!(greedy_max, optimum);
}

#[test]
fn single_zone_closed_form_via_scenario_file() {
    let (net, _) = load_network(fixture("single_exit/network.geojson")).unwrap();
    let sc = EvacScenario::from_json(&std::fs::read_to_string(fixture("single_exit/evacuation.json")).unwrap()).unwrap();
    let runs = run_scenarios(&net, &sc).unwrap();
    assert!(runs.iter().all(|r| r.result.clearance_time_min == 10));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn balanced_spread_bound(sizes in proptest::collection::vec(0u64..200, 1..12)) {
        let (net, _, exits) = grid12();
        let zones: Vec<Zone> = sizes.iter().enumerate().map(|(i, &v)| Zone { id: format!("z{i:02}"), node: format!("c{i:02}"), vehicles: v }).collect();
        let loads = exit_loads(&allocate_balanced(&net, &zones, &exits).unwrap(), &zones, &exits);
        let spread = loads.values().max().unwrap() - loads.values().min().unwrap();
        prop_assert!(spread <= *sizes.iter().max().unwrap());
    }

    #[test]
    fn grid_clearance_monotone(sizes in proptest::collection::vec(0u64..60, 12), which in 0usize..12, extra in 1u64..50, late in any::<bool>()) {
        let (net, mut zones, exits) = grid12();
        for (z, v) in zones.iter_mut().zip(&sizes) {
            z.vehicles = *v;
        }
        let profile = DepartureProfile::new(if late { &PROFILE_LATE_PEAK } else { &PROFILE_EARLY_START }, 15).unwrap();
        let alloc = allocate_nearest(&net, &zones, &exits).unwrap();
        let run = |zones: &[Zone]| {
            let slices = staged_od(&alloc, zones, &exits, &profile).unwrap();
            simulate_evacuation(&net, &slices, &SimConfig::default()).unwrap()
        };
        let before = run(&zones);
        prop_assert!(before.in_network.iter().zip(&before.exited_total).all(|(a, b)| a + b <= sizes.iter().sum::<u64>()));
        zones[which].vehicles += extra;
        let after = run(&zones);
        prop_assert!(after.clearance_time_min >= before.clearance_time_min);
    }
}
