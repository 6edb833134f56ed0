use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("AR polynomial is not Hurwitz: largest real part of its roots is {max_real_part:e}")]
    NonStationary { max_real_part: f64 },

    #[error("AR and MA polynomials share the root {re}{im:+}i")]
    CommonRoot { re: f64, im: f64 },

    #[error("Lyapunov solve failed: {0}")]
    Lyapunov(String),

    #[error("renewal density series did not converge at t = {t} within {k_max} terms (last term {last_term:e})")]
    RenewalTruncation { t: f64, k_max: usize, last_term: f64 },

    #[error("state overflow at step {step} (t = {t})")]
    Overflow { step: usize, t: f64 },

    #[error("arrival {index} at time {time} lies beyond the simulated horizon {t_end}")]
    ArrivalBeyondHorizon { index: usize, time: f64, t_end: f64 },

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("W is singular or ill-conditioned (condition number {cond:e})")]
    SingularW { cond: f64 },

    #[error("Σ₀ is not symmetric (max asymmetry {asymmetry:e})")]
    Asymmetric { asymmetry: f64 },

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}
