//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by generation, measurement, estimation, and the harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Shape mismatch between operands or an empty dimension.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A configuration or generator parameter violates its invariants.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Input is degenerate for the requested operation (e.g. all-zero signal
    /// with a finite SNR target).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A linear system could not be solved; carries a diagnostic and, where
    /// meaningful, the iteration at which it occurred.
    #[error("numerical error{}: {msg}", iteration.map(|i| format!(" at iteration {i}")).unwrap_or_default())]
    Numerical {
        msg: String,
        iteration: Option<usize>,
    },

    /// Every block weight was pruned; the sparse model is empty.
    #[error("empty model: all blocks pruned")]
    EmptyModel,

    /// Estimator name not recognized.
    #[error("unknown solver '{name}'; valid solvers: {valid}")]
    UnknownSolver { name: String, valid: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical {
            msg: msg.into(),
            iteration: None,
        }
    }

    /// Attach an iteration index to a numerical error propagating out of an
    /// estimator loop.
    pub(crate) fn at_iteration(self, iter: usize) -> Self {
        match self {
            Error::Numerical { msg, .. } => Error::Numerical {
                msg,
                iteration: Some(iter),
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
