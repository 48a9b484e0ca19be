use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature frame coefficients are both zero")]
    ZeroFrame,
    #[error("a frame with a momentum component cannot be normalized when omega = 0")]
    UnnormalizableFrame,
    #[error("relative measurement strength is undefined for a free particle (omega = 0)")]
    FreeParticle,
    #[error("operation requires a free particle (omega = 0), got omega = {0}")]
    NotFreeParticle(f64),

    #[error("integration became unstable at tau = {tau}; reduce the step size")]
    IntegrationUnstable { tau: f64 },
    #[error("uncertainty bound violated at tau = {tau}: defect = {defect:e}")]
    HeisenbergViolation { tau: f64, defect: f64 },

    #[error("feedback gain v = {0} is not negative; the system is heated, not cooled")]
    HeatingRegime(f64),
    #[error("bath occupation would be negative (c = {0})")]
    NegativeOccupation(f64),
    #[error("effective temperature is undefined for v = {v} (log argument {ratio} <= 0)")]
    InvalidAnalogy { v: f64, ratio: f64 },

    #[error("ensemble needs {required} steps, budget is {budget}")]
    BudgetExceeded { required: u64, budget: u64 },

    #[error("grid too small: {0}")]
    GridTooSmall(String),
    #[error("wavefunction is not normalized (norm = {0})")]
    NotNormalized(f64),
    #[error("norm collapsed to {norm} at t = {t}; reduce dt")]
    NormCollapse { norm: f64, t: f64 },
    #[error("probability {occupancy:e} leaked to the grid boundary at t = {t}")]
    BoundaryLeak { occupancy: f64, t: f64 },

    #[error("population {leak:e} reached the top of the truncated basis (n_max = {n_max})")]
    TruncationLeak { leak: f64, n_max: usize },
    #[error("density matrix lost positivity at t = {t}: min eigenvalue {min_eigenvalue:e}")]
    PositivityLoss { min_eigenvalue: f64, t: f64 },
    #[error("density matrix invariant violated at t = {t}: {what}")]
    InvalidDensityMatrix { what: String, t: f64 },
}

impl Error {
    /// True for failures of a numerical run (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IntegrationUnstable { .. }
                | Error::HeisenbergViolation { .. }
                | Error::NormCollapse { .. }
                | Error::BoundaryLeak { .. }
                | Error::TruncationLeak { .. }
                | Error::PositivityLoss { .. }
                | Error::InvalidDensityMatrix { .. }
        )
    }
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}
