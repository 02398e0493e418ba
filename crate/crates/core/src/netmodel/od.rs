use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::Deserialize;

use super::Network;
use crate::error::{Error, Result};

/// Origin-destination demand, keyed by `(origin, destination)` node ids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OdMatrix {
    entries: BTreeMap<(String, String), f64>,
    pub time_label: String,
}

impl OdMatrix {
    pub fn new(time_label: impl Into<String>) -> Self {
        OdMatrix {
            entries: BTreeMap::new(),
            time_label: time_label.into(),
        }
    }

    /// Adds demand to a pair. Repeated pairs accumulate.
    pub fn add(&mut self, origin: &str, destination: &str, demand: f64) -> Result<()> {
        if !(demand >= 0.0) || !demand.is_finite() {
            return Err(Error::invalid(format!(
                "demand {origin}->{destination} must be >= 0, got {demand}"
            )));
        }
        *self
            .entries
            .entry((origin.to_string(), destination.to_string()))
            .or_insert(0.0) += demand;
        Ok(())
    }

    pub fn get(&self, origin: &str, destination: &str) -> f64 {
        self.entries
            .get(&(origin.to_string(), destination.to_string()))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn entries(&self) -> &BTreeMap<(String, String), f64> {
        &self.entries
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Deserialize)]
struct OdRow {
    origin: String,
    destination: String,
    demand: f64,
    #[serde(default)]
    time_label: Option<String>,
}

pub fn load_od(path: impl AsRef<Path>, net: &Network) -> Result<OdMatrix> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_od(file, net)
}

/// Reads `origin,destination,demand[,time_label]` rows. Row numbers in
/// errors count data rows from 1.
pub fn read_od<R: Read>(reader: R, net: &Network) -> Result<OdMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut od = OdMatrix::new("static");
    let mut label: Option<String> = None;
    for (i, rec) in rdr.deserialize::<OdRow>().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::OdRow {
            row,
            message: e.to_string(),
        })?;
        for node in [&rec.origin, &rec.destination] {
            if net.node(node).is_none() {
                return Err(Error::OdRow {
                    row,
                    message: format!("unknown node {node}"),
                });
            }
        }
        if rec.demand < 0.0 || !rec.demand.is_finite() {
            return Err(Error::OdRow {
                row,
                message: format!("negative demand {}", rec.demand),
            });
        }
        if let Some(t) = rec.time_label.filter(|t| !t.is_empty()) {
            match &label {
                Some(l) if *l != t => {
                    return Err(Error::OdRow {
                        row,
                        message: format!("time_label {t} differs from {l}"),
                    })
                }
                _ => label = Some(t),
            }
        }
        od.add(&rec.origin, &rec.destination, rec.demand)?;
    }
    if let Some(l) = label {
        od.time_label = l;
    }
    Ok(od)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::tests::triangle;

    #[test]
    fn single_row() {
        let od = read_od("origin,destination,demand\nA,B,100\n".as_bytes(), &triangle()).unwrap();
        assert_eq!(od.get("A", "B"), 100.0);
        assert_eq!(od.len(), 1);
        assert_eq!(od.time_label, "static");
    }

    #[test]
    fn duplicates_are_summed() {
        let text = "origin,destination,demand\nA,B,50\nA,B,50\n";
        let od = read_od(text.as_bytes(), &triangle()).unwrap();
        assert_eq!(od.get("A", "B"), 100.0);
    }

    #[test]
    fn unknown_node_names_row() {
        let text = "origin,destination,demand\nA,B,50\nA,Z,10\n";
        match read_od(text.as_bytes(), &triangle()).unwrap_err() {
            Error::OdRow { row, message } => {
                assert_eq!(row, 2);
                assert!(message.contains('Z'));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn negative_demand() {
        let text = "origin,destination,demand\nA,B,-1\n";
        assert!(matches!(
            read_od(text.as_bytes(), &triangle()),
            Err(Error::OdRow { row: 1, .. })
        ));
    }

    #[test]
    fn time_label_column() {
        let text = "origin,destination,demand,time_label\nA,B,5,12:00\nB,C,1.5,12:00\n";
        let od = read_od(text.as_bytes(), &triangle()).unwrap();
        assert_eq!(od.time_label, "12:00");
        assert_eq!(od.total(), 6.5);
    }
}
