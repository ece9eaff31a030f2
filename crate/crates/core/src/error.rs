use std::path::PathBuf;

/// Errors produced by the forward, inverse and verification pipelines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: {left} vs {right}")]
    GridMismatch { left: String, right: String },

    #[error("input format error in {}: {message}", path.display())]
    InputFormat { path: PathBuf, message: String },

    #[error("{stage} did not converge after {iterations} iterations (last residual {residual:e}){detail}")]
    NonConvergence {
        stage: &'static str,
        iterations: usize,
        residual: f64,
        /// Extra context, empty or starting with "; ".
        detail: String,
    },

    #[error("internal consistency error: {0}")]
    InternalConsistency(String),

    #[error("ill-conditioned Gram matrix: {0}")]
    Conditioning(String),

    #[error("minimality oracle found no feasible point in {starts} starts (best constraint residual {best_violation:e})")]
    OracleInfeasible { starts: usize, best_violation: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
