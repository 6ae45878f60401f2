use thiserror::Error;

/// Errors raised by the solver, the operator pipelines and the scattering analysis.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical blowup at t = {t}: {detail}")]
    Blowup { t: f64, detail: String },

    #[error(
        "boundary leak at t = {t}: {fraction:.3e} of the mass lies within 5% of the box edge (budget {budget:.1e})"
    )]
    BoundaryLeak { t: f64, fraction: f64, budget: f64 },

    #[error("solver did not converge: {0}")]
    Solver(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("resource limit: {0}")]
    Resource(String),
}

impl LabError {
    /// True for failures of the numerics themselves (blowup, leak, non-convergence),
    /// as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            LabError::Blowup { .. } | LabError::BoundaryLeak { .. } | LabError::Solver(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
