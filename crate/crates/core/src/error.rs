use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value during assembly: {0}")]
    Assembly(String),

    #[error("quadrature did not converge for pair ({row}, {col}); estimated relative error {estimate:e}")]
    Quadrature { row: usize, col: usize, estimate: f64 },

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("degenerate triangle at element {element} (area {area:e})")]
    DegenerateElement { element: usize, area: f64 },

    #[error("point {index} lies on the boundary (distance {distance:e})")]
    PointOnSurface { index: usize, distance: f64 },

    #[error("singular step matrix ({0})")]
    Singular(String),

    #[error("non-finite source value at t={t}, x={x:?}, xi={xi:?}")]
    NonFiniteSource { t: f64, x: [f64; 3], xi: Vec<f64> },

    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad solution container: {0}")]
    Container(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
