use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("index {index} out of range for {len} antennas")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("derivative order {0} not supported (expected 1 or 2)")]
    UnsupportedOrder(u8),

    /// Antennas packed too tightly for the coupling matrix to be inverted
    /// reliably.
    #[error("coupling matrix not positive definite: min eigenvalue {min_eig:e} <= floor {floor:e}")]
    NotPositiveDefinite { min_eig: f64, floor: f64 },

    #[error("Sylvester pencil is singular: min eigenvalue sum {0:e}")]
    SingularPencil(f64),

    #[error("singular value decomposition did not converge")]
    SvdNoConvergence,

    #[error("water-filling requires at least one nonzero singular value")]
    AllChannelsZero,

    #[error("effective channel is numerically zero")]
    ZeroChannel,

    #[error("initial layout infeasible: {0}")]
    InfeasibleInit(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
