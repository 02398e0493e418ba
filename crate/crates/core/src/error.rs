use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the planning library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },
    #[error("feature {feature}: missing attribute `{attribute}`")]
    MissingAttribute { feature: String, attribute: String },
    #[error("feature {feature}: attribute `{attribute}` must be {requirement}, got {value}")]
    InvalidAttribute {
        feature: String,
        attribute: String,
        requirement: String,
        value: String,
    },
    #[error("link {link}: endpoint {endpoint} does not match any node")]
    DanglingEndpoint { link: String, endpoint: String },
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("unknown link {0}")]
    UnknownLink(String),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("OD row {row}: {message}")]
    OdRow { row: usize, message: String },
    #[error("no path from {origin} to {destination}")]
    NoPath { origin: String, destination: String },
    #[error("flow maps cover different link sets")]
    MismatchedLinkSets,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("hour {0} is not defined in the hourly profile")]
    UndefinedHour(u32),
    #[error("queue does not clear within the {horizon_hr} h horizon")]
    HorizonTooShort { horizon_hr: f64 },
    #[error("no fixture entry for {0}")]
    MissingFixture(String),
    #[error("unknown zone {0}")]
    UnknownZone(String),
    #[error("unknown exit {0}")]
    UnknownExit(String),
    #[error("zone {0} cannot reach any exit")]
    UnreachableZone(String),
    #[error("evacuation still running after {horizon_min} min")]
    SimulationHorizon { horizon_min: u32 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
