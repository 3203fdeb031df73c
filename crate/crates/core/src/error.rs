use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rejected configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("singular design in shard {shard}")]
    SingularDesign { shard: usize },

    #[error("matrix is singular or not positive definite")]
    Singular,

    #[error("degenerate nodewise residual variance at coordinate {coordinate}: tau^2 = {tau2:e}")]
    DegenerateResidual { coordinate: usize, tau2: f64 },

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("degenerate conditional information {0:e}")]
    DegenerateInformation(f64),

    #[error("Dantzig program infeasible; minimal achievable residual {min_residual:e}")]
    DantzigInfeasible { min_residual: f64 },

    #[error("{0} failed to converge")]
    NonConvergence(String),

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

impl Error {
    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "invalid-config",
            Error::Dimension(_) => "dimension",
            Error::Index { .. } => "index",
            Error::Data(_) => "data",
            Error::SingularDesign { .. } => "singular-design",
            Error::Singular => "singular",
            Error::DegenerateResidual { .. } => "degenerate-residual",
            Error::DegenerateVariance(_) => "degenerate-variance",
            Error::DegenerateInformation(_) => "degenerate-information",
            Error::DantzigInfeasible { .. } => "dantzig-infeasible",
            Error::NonConvergence(_) => "non-convergence",
            Error::Io { .. } | Error::Csv { .. } => "io",
        }
    }

    /// Whether the error stems from the configuration rather than the data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::InvalidConfig(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
