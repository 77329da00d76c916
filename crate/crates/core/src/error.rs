use thiserror::Error;

/// Errors produced by the library.
///
/// Terminal conditions of a gradient-descent run (convergence, iteration cap,
/// divergence) are reported through [`crate::trajectory::RunStatus`], not here.
/// `Diverged` only surfaces from single-shot operations such as one step.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value encountered at iteration {iteration}")]
    Diverged { iteration: u64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid step plan: {0}")]
    InvalidPlan(String),

    #[error("scheme {scheme} cannot produce {target} initializations")]
    IncompatibleScheme { scheme: String, target: &'static str },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("region is infeasible: {0}")]
    InfeasibleRegion(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("plot error: {0}")]
    Plot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
