use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inputs are individually valid but do not fit together.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate excitation: angle phasor magnitude {magnitude:.3e} rad is below {threshold:.1e} rad")]
    DegenerateExcitation { magnitude: f64, threshold: f64 },

    #[error("rank-deficient design matrix (condition number {condition:.3e})")]
    Conditioning { condition: f64 },

    #[error("incomplete RSS grid: missing cell {0}")]
    IncompleteGrid(String),

    #[error("degenerate F-test: the full model fits perfectly (RSS = 0)")]
    PerfectFit,

    #[error("numeric failure in {routine}: {detail}")]
    NonConvergence { routine: &'static str, detail: String },

    #[error("infeasible design: requested margin {requested_deg:.3} deg exceeds the attainable {max_deg:.3} deg")]
    Infeasible { requested_deg: f64, max_deg: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv { path: path.into(), source }
    }

    /// True for failures of the numerical machinery itself, as opposed to
    /// bad inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::DegenerateExcitation { .. }
                | Error::Conditioning { .. }
                | Error::PerfectFit
                | Error::NonConvergence { .. }
        )
    }
}
