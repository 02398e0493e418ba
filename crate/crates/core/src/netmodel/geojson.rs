//! GeoJSON ingestion and export.
//!
//! Nodes are `Point` features with an `id` property. Links are `LineString`
//! features carrying `id`, `lanes`, `free_flow_kmh`, `road_class` and
//! `capacity_vph`, plus optional `lane_width_m`, `length_km`, `from_node` and
//! `to_node`. When `from_node`/`to_node` are absent, the first and last
//! vertices are matched against node coordinates. A feature with `null`
//! geometry is a node unless it names both endpoints.

use std::path::Path;

use log::warn;
use serde_json::{json, Map, Value};

use super::{Link, Network, Node, RoadClass, DEFAULT_LANE_WIDTH_M};
use crate::error::{Error, Result};

/// Declared and computed lengths may differ by this ratio before a warning.
pub const LENGTH_MISMATCH_RATIO: f64 = 0.10;

const EARTH_RADIUS_KM: f64 = 6371.0088;

// Endpoint snapping tolerance, in degrees.
const SNAP_DEG: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct LengthWarning {
    pub link: String,
    pub declared_km: f64,
    pub computed_km: f64,
}

impl std::fmt::Display for LengthWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "link {}: declared length {} km differs from geometry {:.4} km",
            self.link, self.declared_km, self.computed_km
        )
    }
}

/// Great-circle distance between two `[lon, lat]` points.
pub fn haversine_km(a: [f64; 2], b: [f64; 2]) -> f64 {
    let (lon1, lat1) = (a[0].to_radians(), a[1].to_radians());
    let (lon2, lat2) = (b[0].to_radians(), b[1].to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

pub fn polyline_length_km(points: &[[f64; 2]]) -> f64 {
    points.windows(2).map(|w| haversine_km(w[0], w[1])).sum()
}

pub fn load_network(path: impl AsRef<Path>) -> Result<(Network, Vec<LengthWarning>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_network(&text).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse {
            context: path.display().to_string(),
            message,
        },
        other => other,
    })
}

pub fn parse_network(text: &str) -> Result<(Network, Vec<LengthWarning>)> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        context: "network".into(),
        message: e.to_string(),
    })?;
    if root.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(Error::Parse {
            context: "network".into(),
            message: "expected a FeatureCollection".into(),
        });
    }
    let features = root
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Parse {
            context: "network".into(),
            message: "missing `features` array".into(),
        })?;

    let mut nodes = Vec::new();
    let mut raw_links = Vec::new();
    for (i, f) in features.iter().enumerate() {
        let empty = Map::new();
        let props = f.get("properties").and_then(Value::as_object).unwrap_or(&empty);
        let fid = props
            .get("id")
            .and_then(Value::as_str)
            .map(str::to_string)
            .unwrap_or_else(|| format!("#{i}"));
        let geometry = f.get("geometry").filter(|g| !g.is_null());
        let gtype = geometry.and_then(|g| g.get("type")).and_then(Value::as_str);
        match gtype {
            Some("Point") => {
                let c = parse_position(&fid, &geometry.unwrap()["coordinates"])?;
                nodes.push(Node {
                    id: require_id(&fid, props)?,
                    coord: Some(c),
                });
            }
            Some("LineString") => {
                let coords = geometry.unwrap()["coordinates"]
                    .as_array()
                    .ok_or_else(|| bad(&fid, "coordinates", "an array", "missing"))?
                    .iter()
                    .map(|p| parse_position(&fid, p))
                    .collect::<Result<Vec<_>>>()?;
                if coords.len() < 2 {
                    return Err(bad(&fid, "coordinates", "at least 2 vertices", coords.len()));
                }
                raw_links.push((require_id(&fid, props)?, props.clone(), Some(coords)));
            }
            None if props.contains_key("from_node") && props.contains_key("to_node") => {
                raw_links.push((require_id(&fid, props)?, props.clone(), None));
            }
            None => nodes.push(Node {
                id: require_id(&fid, props)?,
                coord: None,
            }),
            Some(other) => {
                return Err(Error::Parse {
                    context: format!("feature {fid}"),
                    message: format!("unsupported geometry {other}"),
                })
            }
        }
    }

    let mut warnings = Vec::new();
    let mut links = Vec::with_capacity(raw_links.len());
    for (id, props, coords) in raw_links {
        let (link, warning) = build_link(&id, &props, coords, &nodes)?;
        if let Some(w) = warning {
            warn!("{w}");
            warnings.push(w);
        }
        links.push(link);
    }
    Ok((Network::new(nodes, links)?, warnings))
}

fn require_id(fid: &str, props: &Map<String, Value>) -> Result<String> {
    props
        .get("id")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| Error::MissingAttribute {
            feature: fid.to_string(),
            attribute: "id".into(),
        })
}

fn bad(fid: &str, attribute: &str, requirement: &str, value: impl ToString) -> Error {
    Error::InvalidAttribute {
        feature: fid.to_string(),
        attribute: attribute.to_string(),
        requirement: requirement.to_string(),
        value: value.to_string(),
    }
}

fn parse_position(fid: &str, v: &Value) -> Result<[f64; 2]> {
    let arr = v.as_array().filter(|a| a.len() >= 2);
    match arr.map(|a| (a[0].as_f64(), a[1].as_f64())) {
        Some((Some(lon), Some(lat))) => Ok([lon, lat]),
        _ => Err(bad(fid, "coordinates", "[lon, lat]", v)),
    }
}

fn number(fid: &str, props: &Map<String, Value>, key: &str) -> Result<Option<f64>> {
    match props.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| bad(fid, key, "a number", v)),
    }
}

fn required_number(fid: &str, props: &Map<String, Value>, key: &str) -> Result<f64> {
    number(fid, props, key)?.ok_or_else(|| Error::MissingAttribute {
        feature: fid.to_string(),
        attribute: key.to_string(),
    })
}

fn snap(link: &str, p: [f64; 2], nodes: &[Node]) -> Result<String> {
    nodes
        .iter()
        .find(|n| {
            n.coord
                .is_some_and(|c| (c[0] - p[0]).abs() <= SNAP_DEG && (c[1] - p[1]).abs() <= SNAP_DEG)
        })
        .map(|n| n.id.clone())
        .ok_or_else(|| Error::DanglingEndpoint {
            link: link.to_string(),
            endpoint: format!("[{}, {}]", p[0], p[1]),
        })
}

fn build_link(
    id: &str,
    props: &Map<String, Value>,
    coords: Option<Vec<[f64; 2]>>,
    nodes: &[Node],
) -> Result<(Link, Option<LengthWarning>)> {
    let lanes_raw = props.get("lanes").ok_or_else(|| Error::MissingAttribute {
        feature: id.to_string(),
        attribute: "lanes".into(),
    })?;
    let lanes = lanes_raw
        .as_u64()
        .filter(|&n| n >= 1 && n <= u32::MAX as u64)
        .ok_or_else(|| bad(id, "lanes", "an integer >= 1", lanes_raw))? as u32;
    let free_flow_kmh = required_number(id, props, "free_flow_kmh")?;
    let capacity_vph = required_number(id, props, "capacity_vph")?;
    let class_raw = props
        .get("road_class")
        .ok_or_else(|| Error::MissingAttribute {
            feature: id.to_string(),
            attribute: "road_class".into(),
        })?;
    let road_class: RoadClass = class_raw
        .as_str()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad(id, "road_class", "\"highway\" or \"local\"", class_raw))?;
    let lane_width_m = number(id, props, "lane_width_m")?.unwrap_or(DEFAULT_LANE_WIDTH_M);
    let declared = number(id, props, "length_km")?;

    let endpoint = |key: &str, fallback: Option<[f64; 2]>| -> Result<String> {
        match props.get(key).and_then(Value::as_str) {
            Some(s) => Ok(s.to_string()),
            None => match fallback {
                Some(p) => snap(id, p, nodes),
                None => Err(Error::MissingAttribute {
                    feature: id.to_string(),
                    attribute: key.to_string(),
                }),
            },
        }
    };
    let from_node = endpoint("from_node", coords.as_ref().map(|c| c[0]))?;
    let to_node = endpoint("to_node", coords.as_ref().map(|c| c[c.len() - 1]))?;

    let computed = coords.as_deref().map(polyline_length_km);
    let mut warning = None;
    let length_km = match (declared, computed) {
        (Some(d), Some(c)) => {
            if d > 0.0 && ((c - d) / d).abs() > LENGTH_MISMATCH_RATIO {
                warning = Some(LengthWarning {
                    link: id.to_string(),
                    declared_km: d,
                    computed_km: c,
                });
            }
            d
        }
        (Some(d), None) => d,
        (None, Some(c)) => c,
        (None, None) => {
            return Err(Error::MissingAttribute {
                feature: id.to_string(),
                attribute: "length_km".into(),
            })
        }
    };

    let link = Link {
        id: id.to_string(),
        from_node,
        to_node,
        length_km,
        lanes,
        lane_width_m,
        free_flow_kmh,
        capacity_vph,
        road_class,
        closed: false,
        geometry: coords,
    };
    link.validate()?;
    Ok((link, warning))
}

/// Serializes a network as a GeoJSON FeatureCollection. Closure state is not
/// part of the file format.
pub fn to_geojson(net: &Network) -> Value {
    let mut features = Vec::with_capacity(net.nodes().len() + net.links().len());
    for n in net.nodes() {
        let geometry = match n.coord {
            Some(c) => json!({ "type": "Point", "coordinates": c }),
            None => Value::Null,
        };
        features.push(json!({
            "type": "Feature",
            "geometry": geometry,
            "properties": { "id": n.id },
        }));
    }
    for l in net.links() {
        let geometry = match &l.geometry {
            Some(g) => json!({ "type": "LineString", "coordinates": g }),
            None => Value::Null,
        };
        features.push(json!({
            "type": "Feature",
            "geometry": geometry,
            "properties": {
                "id": l.id,
                "from_node": l.from_node,
                "to_node": l.to_node,
                "length_km": l.length_km,
                "lanes": l.lanes,
                "lane_width_m": l.lane_width_m,
                "free_flow_kmh": l.free_flow_kmh,
                "capacity_vph": l.capacity_vph,
                "road_class": l.road_class.as_str(),
            },
        }));
    }
    json!({ "type": "FeatureCollection", "features": features })
}

pub fn save_network(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&to_geojson(net)).expect("network serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link_feature(props: Value, coords: Value) -> String {
        json!({
            "type": "FeatureCollection",
            "features": [
                { "type": "Feature", "geometry": { "type": "Point", "coordinates": [9.0, 45.0] }, "properties": { "id": "A" } },
                { "type": "Feature", "geometry": { "type": "Point", "coordinates": [9.1, 45.0] }, "properties": { "id": "B" } },
                { "type": "Feature", "geometry": { "type": "LineString", "coordinates": coords }, "properties": props },
            ]
        })
        .to_string()
    }

    #[test]
    fn minimal_network() {
        let text = link_feature(
            json!({"id": "ab", "lanes": 2, "free_flow_kmh": 120, "road_class": "highway",
                   "capacity_vph": 4000, "length_km": 10}),
            json!([[9.0, 45.0], [9.1, 45.0]]),
        );
        let (net, warnings) = parse_network(&text).unwrap();
        assert_eq!(net.links().len(), 1);
        let l = &net.links()[0];
        assert_eq!((l.from_node.as_str(), l.to_node.as_str()), ("A", "B"));
        assert_eq!(l.length_km, 10.0);
        assert_eq!(l.lane_width_m, 3.5);
        let a = net.node_idx("A").unwrap();
        assert_eq!(net.outgoing(a), &[0]);
        // 0.1 deg of longitude at 45N is ~7.9 km, so the declared 10 km warns
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn missing_free_flow_names_link() {
        let text = link_feature(
            json!({"id": "ab", "lanes": 2, "road_class": "highway", "capacity_vph": 4000}),
            json!([[9.0, 45.0], [9.1, 45.0]]),
        );
        match parse_network(&text).unwrap_err() {
            Error::MissingAttribute { feature, attribute } => {
                assert_eq!(feature, "ab");
                assert_eq!(attribute, "free_flow_kmh");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn non_positive_lanes_rejected() {
        let text = link_feature(
            json!({"id": "ab", "lanes": 0, "free_flow_kmh": 90, "road_class": "local", "capacity_vph": 900}),
            json!([[9.0, 45.0], [9.1, 45.0]]),
        );
        let err = parse_network(&text).unwrap_err();
        assert!(matches!(err, Error::InvalidAttribute { feature, .. } if feature == "ab"));
    }

    #[test]
    fn dangling_vertex() {
        let text = link_feature(
            json!({"id": "ab", "lanes": 1, "free_flow_kmh": 90, "road_class": "local", "capacity_vph": 900}),
            json!([[9.0, 45.0], [9.3, 45.0]]),
        );
        let err = parse_network(&text).unwrap_err();
        assert!(matches!(err, Error::DanglingEndpoint { link, .. } if link == "ab"));
    }

    #[test]
    fn not_json() {
        assert!(matches!(parse_network("{oops"), Err(Error::Parse { .. })));
    }

    // 1 km along the equator, split over three vertices.
    fn equator_km(km: f64) -> f64 {
        km / (EARTH_RADIUS_KM * std::f64::consts::PI / 180.0)
    }

    #[test]
    fn three_vertex_polyline_length() {
        let x1 = equator_km(0.4);
        let x2 = equator_km(1.0);
        let pts = [[0.0, 0.0], [x1, 0.0], [x2, 0.0]];
        // hand-evaluated haversine: on the equator each leg is R * dlon
        let hand = EARTH_RADIUS_KM * (x1.to_radians()) + EARTH_RADIUS_KM * (x2 - x1).to_radians();
        assert!((polyline_length_km(&pts) - hand).abs() < 1e-12);
        assert!((polyline_length_km(&pts) - 1.0).abs() < 1e-9);
    }

    fn equator_doc(declared: f64) -> String {
        json!({
            "type": "FeatureCollection",
            "features": [
                { "type": "Feature", "geometry": { "type": "Point", "coordinates": [0.0, 0.0] }, "properties": { "id": "A" } },
                { "type": "Feature", "geometry": { "type": "Point", "coordinates": [equator_km(1.0), 0.0] }, "properties": { "id": "B" } },
                { "type": "Feature",
                  "geometry": { "type": "LineString", "coordinates": [[0.0, 0.0], [equator_km(0.4), 0.0], [equator_km(1.0), 0.0]] },
                  "properties": { "id": "ab", "lanes": 1, "free_flow_kmh": 50, "road_class": "local",
                                  "capacity_vph": 900, "length_km": declared } },
            ]
        })
        .to_string()
    }

    #[test]
    fn declared_length_checked_against_geometry() {
        let (net, warnings) = parse_network(&equator_doc(1.0)).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(net.links()[0].length_km, 1.0);

        let (net, warnings) = parse_network(&equator_doc(1.2)).unwrap();
        assert_eq!(warnings.len(), 1);
        // never auto-corrected
        assert_eq!(net.links()[0].length_km, 1.2);
    }

    #[test]
    fn computed_length_when_not_declared() {
        let doc = equator_doc(1.0).replace(",\"length_km\":1.0", "");
        let (net, _) = parse_network(&doc).unwrap();
        assert!((net.links()[0].length_km - 1.0).abs() < 1e-9);
    }
}
