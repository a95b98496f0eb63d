use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{component}: {message}")]
    Semantic { component: String, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("sampling budget exhausted after {draws} draws ({accepted} accepted)")]
    BudgetExhausted { draws: usize, accepted: usize },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("no start converged; best point has residual {residual:e}")]
    Unconverged { residual: f64, gamma: Vec<f64> },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn semantic(component: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Semantic {
            component: component.into(),
            message: message.into(),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
