use detour::activation::{
    activation_plan, Alternative, LiveTimes, Residual, RoutePair, TravelTimes,
};
use detour::assignment::{extract_itinerary, shortest_path, ClassFilter, Itinerary, ItineraryKind, LinkFlows};
use detour::flowtime::SpeedFlowParams;
use detour::netmodel::{ClosureScenario, Link, Network, Node, RoadClass};
use detour::queueing::{build_arrivals, io_delay, DelayStatistic, QueueParams};

/// Motorway s -> m -> e closed at m; highway loops left and right, a local
/// street through the town.
fn corridor() -> Network {
    let nodes = ["s", "m", "e", "l1", "r1", "r2", "t1"].map(Node::new).to_vec();
    let hw = |id: &str, f: &str, t: &str, l: f64, n: u32| Link::new(id, f, t, l, n, 120.0, 2000.0 * n as f64, RoadClass::Highway);
    let lo = |id: &str, f: &str, t: &str, l: f64| Link::new(id, f, t, l, 1, 50.0, 900.0, RoadClass::Local);
    let links = vec![
        hw("m1", "s", "m", 4.0, 2),
        hw("m2", "m", "e", 4.0, 2),
        hw("L1", "s", "l1", 30.0, 2),
        hw("L2", "l1", "e", 30.0, 2),
        hw("R1", "s", "r1", 20.0, 1),
        hw("R2", "r1", "r2", 15.0, 1),
        hw("R3", "r2", "e", 10.0, 1),
        lo("u1", "s", "t1", 5.0),
        lo("u2", "t1", "e", 6.0),
    ];
    Network::new(nodes, links).unwrap()
}

fn live(net: &Network) -> LiveTimes<'_> {
    let closure = ClosureScenario::new(&["m1"], 3.0);
    let main = shortest_path(net, "s", "e", &ClassFilter::only(RoadClass::Highway)).unwrap();
    let pick = |kind, filter: ClassFilter, avoid: &[&str]| -> Itinerary {
        let mut c = closure.clone();
        c.closed_link_ids.extend(avoid.iter().map(|s| s.to_string()));
        let mut it = extract_itinerary(net, &c, "s", "e", kind).unwrap();
        assert!(filter.allows(net.link(&it.links[0]).unwrap().road_class));
        it.kind = kind;
        it
    };
    LiveTimes {
        net,
        background: LinkFlows::zeros(net),
        disrupted_flow_vph: 3750.0,
        branch_weights: [0.5, 0.5],
        macro_left: RoutePair { alternative: pick(ItineraryKind::MacroLeft, ClassFilter::only(RoadClass::Highway), &["R1"]), main: main.clone() },
        macro_right: RoutePair { alternative: pick(ItineraryKind::MacroRight, ClassFilter::only(RoadClass::Highway), &["L1"]), main: main.clone() },
        micro: RoutePair { alternative: pick(ItineraryKind::Micro, ClassFilter::only(RoadClass::Local), &[]), main },
        arrivals: build_arrivals(&[3750.0, 3700.0, 4050.0], 12.0, 12.0).unwrap(),
        queue: QueueParams::default(),
        statistic: DelayStatistic::Maximum,
        speed: SpeedFlowParams::default(),
    }
}

#[test]
fn zero_response_degenerates() {
    let net = corridor();
    let lt = live(&net);
    // nobody diverts: alternatives run at free flow and macros leave the
    // residual untouched
    let micro = lt.route_times(Alternative::Micro, 0.0).unwrap();
    assert!((micro.t_alternative_min - lt.micro.alternative.free_flow_min).abs() < 1e-9);
    assert_eq!(lt.route_times(Alternative::MacroThenMicro, 0.0).unwrap(), micro);
    for d in [0.5, 1.0, 2.0, 3.0] {
        let full = lt.delay_min(d, Residual::Full, 0.0).unwrap();
        assert_eq!(lt.delay_min(d, Residual::AfterMacro, 0.0).unwrap(), full);
        let direct = io_delay(&lt.arrivals, d, &lt.queue).unwrap().max_delay_min;
        assert_eq!(full, direct);
    }
}

#[test]
fn full_response_empties_the_queue() {
    let net = corridor();
    let lt = live(&net);
    assert_eq!(lt.delay_min(2.0, Residual::AfterMacro, 1.0).unwrap(), 0.0);
    let t = lt.route_times(Alternative::MacroThenMicro, 1.0).unwrap();
    assert!((t.t_alternative_min - lt.micro.alternative.free_flow_min).abs() < 1e-9);
}

#[test]
fn live_times_grow_with_response() {
    let net = corridor();
    let lt = live(&net);
    for alt in [Alternative::Micro, Alternative::MacroLeft, Alternative::MacroRight] {
        let mut last = 0.0;
        for r in [0.0, 0.2, 0.4, 0.6, 0.8, 1.0] {
            let t = lt.route_times(alt, r).unwrap().t_alternative_min;
            assert!(t >= last, "{alt:?} at {r}");
            last = t;
        }
    }
}

#[test]
fn live_plan_is_monotone() {
    let net = corridor();
    let lt = live(&net);
    for rate in [0.3, 0.6] {
        let plan = activation_plan(&[0.5, 1.0, 1.5, 2.0, 2.5, 3.0], rate, &lt).unwrap();
        assert!(plan.is_monotone(), "rate {rate}");
    }
    assert!(lt.route_times(Alternative::Micro, 1.5).is_err());
}
