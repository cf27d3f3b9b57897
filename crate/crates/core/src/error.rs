use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("PB spacing {l0} m must exceed half a wavelength ({half_lambda} m)")]
    SpacingViolation { l0: f64, half_lambda: f64 },

    #[error("requested {requested} PBs but at most {max} fit on the perimeter")]
    Capacity { requested: usize, max: usize },

    #[error("points coincide; distance is zero")]
    SingularDistance,

    #[error("channel model inconsistent: {0}")]
    ModelInconsistency(String),

    #[error("division by zero: {0}")]
    DivisionByZero(String),

    #[error("harvesting requirement {required} W is not below saturation {saturation} W")]
    InfeasibleSaturation { required: f64, saturation: f64 },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("degenerate exposure region: effective bound {0} is not positive")]
    DegenerateRegion(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
