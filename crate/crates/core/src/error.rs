use thiserror::Error;

/// Errors raised by the correlation engines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("cutoff too small: {0}")]
    CutoffTooSmall(String),

    #[error("density matrix invalid: {0}")]
    InvalidState(String),

    #[error("normal-order reconstruction residual {residual:.3e} exceeds {tolerance:.1e}")]
    ReconstructionResidual { residual: f64, tolerance: f64 },

    #[error("L_max = {l_max} insufficient: series tail estimate {tail:.3e} exceeds {tolerance:.1e}")]
    LmaxInsufficient { l_max: usize, tail: f64, tolerance: f64 },

    #[error("mean photon number {0:.3e} too small, correlation undefined")]
    ZeroDenominator(f64),

    #[error("integrator step-size failure at t = {t}: {reason}")]
    StepSize { t: f64, reason: String },

    #[error("kernel instability: {0}")]
    KernelInstability(String),

    #[error("integrand not integrable: {0}")]
    NonIntegrable(String),

    #[error("measure convention mismatch: {0}")]
    MeasureConvention(String),

    #[error("{0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
