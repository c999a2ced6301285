use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("blow-up passed at step {step} (t = {t})")]
    BlowUpPassed { step: u64, t: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not converge on [{lo}, {hi}]: estimate {estimate}, error {error_estimate}")]
    Quadrature {
        lo: f64,
        hi: f64,
        estimate: f64,
        error_estimate: f64,
    },

    #[error("time {t} is beyond the predictable range (max {max_time})")]
    OutOfRange { t: f64, max_time: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("singular fit: {0}")]
    SingularFit(String),

    #[error("extraction undefined: fitted slope {slope} is not negative")]
    ExtractionUndefined { slope: f64 },

    #[error("fit failed after {iterations} iterations (rms residual {rms}, params a={a} b={b} k={k})")]
    FitFailed {
        iterations: usize,
        rms: f64,
        a: f64,
        b: f64,
        k: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
