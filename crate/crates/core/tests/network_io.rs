mod common;

use common::fixture;
use detour::netmodel::{load_network, save_network};

#[test]
fn triangle_round_trips_bit_exact() {
    let (net, warnings) = load_network(fixture("triangle/network.geojson")).unwrap();
    assert!(warnings.is_empty(), "{warnings:?}");
    assert_eq!(net.links().len(), 3);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("copy.geojson");
    save_network(&net, &path).unwrap();
    let (again, _) = load_network(&path).unwrap();
    assert_eq!(again.nodes(), net.nodes());
    assert_eq!(again.links(), net.links());
    for (a, b) in again.links().iter().zip(net.links()) {
        assert_eq!(a.length_km.to_bits(), b.length_km.to_bits());
    }

    // a second save is byte-identical
    let path2 = dir.path().join("copy2.geojson");
    save_network(&again, &path2).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
}

#[test]
fn river_town_loads_cleanly() {
    let (net, warnings) = load_network(fixture("river_town/river_town.geojson")).unwrap();
    assert!(warnings.is_empty());
    assert_eq!(net.nodes().len(), 52);
    // 8x6 grid in both directions plus four exit links
    assert_eq!(net.links().len(), 2 * (7 * 6 + 8 * 5) + 4);
}

#[test]
fn geometry_free_network_loads() {
    let (net, _) = load_network(fixture("single_exit/network.geojson")).unwrap();
    assert_eq!(net.link("road").unwrap().free_flow_min(), 5.0);
}

#[test]
fn missing_file_names_the_path() {
    let err = load_network("no/such/network.geojson").unwrap_err();
    assert!(err.to_string().contains("no/such/network.geojson"), "{err}");
}
