use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("resolution too coarse: {cells:.2} cells across a {feature:e} m feature, need at least {required}")]
    Resolution { feature: f64, cells: f64, required: usize },

    #[error("grid of {nodes} nodes exceeds node budget {budget}")]
    Resource { nodes: usize, budget: usize },

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("capacitance methods disagree: energy {energy:e} F/m vs charge {charge:e} F/m")]
    Consistency { energy: f64, charge: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("ill-conditioned system (condition estimate {condition:e}): {reason}")]
    Conditioning { condition: f64, reason: String },

    #[error("fit failed after {iterations} iterations (cost {cost:e}): {reason}")]
    Fit {
        iterations: usize,
        cost: f64,
        reason: String,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("E_J/E_C = {ratio:.2} is outside the transmon asymptotic regime (need >= {min})")]
    OutOfRegime { ratio: f64, min: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    /// True for errors raised by iterative numerics (solver or fit), as
    /// opposed to bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Convergence { .. } | Error::Fit { .. } | Error::Consistency { .. }
        )
    }
}
