use std::path::PathBuf;

use crate::burago::BuragoDecomposition;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// The conjugation maximizer sits on the edge of the search box.
    #[error("conjugation radius {radius} too small: argmax {argmax} is on the search boundary")]
    RadiusTooSmall { radius: f64, argmax: f64 },

    /// The effective-Lagrangian grid does not contain the conjugation maximizer.
    #[error("grid too narrow: argmax for p = {p:?} lies on the grid boundary")]
    GridTooNarrow { p: Vec<f64> },

    #[error("optimizer diverged after {iterations} iterations (last finite action {last_action}, gradient norm {gradient_norm})")]
    Divergence {
        iterations: usize,
        last_action: f64,
        gradient_norm: f64,
    },

    #[error("decomposition search exhausted its budget; best residual {}", best.residual)]
    SearchFailure { best: Box<BuragoDecomposition> },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("rate fit failed: {0}")]
    Fit(String),

    /// A sub-run failed; `partial` holds whatever was finished before it.
    #[error("{stage} aborted: {source}")]
    Aborted {
        stage: String,
        partial: Box<serde_json::Value>,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub fn parse(path: impl Into<PathBuf>, message: impl std::fmt::Display) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
