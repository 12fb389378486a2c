use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("pole at {pole} lies within {margin} of the cutoff {k_max}")]
    PoleOutOfRange { pole: f64, k_max: f64, margin: f64 },

    #[error("tail model misses the integrand at k = {k}: |f - tail| = {gap:.3e}, |f| = {magnitude:.3e}")]
    TailMismatch { k: f64, gap: f64, magnitude: f64 },

    #[error("{what} did not converge after {iterations} iterations (last change {last_change:.3e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        last_change: f64,
    },

    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
}
