use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("cluster spectrum is empty")]
    EmptySpectrum,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("step called on an absorbing state")]
    StepOnAbsorbing,

    #[error("negative density {value:e} at size {size} ({direction}) at t = {t}")]
    NegativeDensity {
        direction: char,
        size: usize,
        value: f64,
        t: f64,
    },

    #[error("initial support reaches size {size}, beyond truncation {truncation}")]
    UnsupportedSize { size: u64, truncation: usize },

    #[error("power series has a vanishing constant term ({0:e})")]
    ZeroConstantTerm(f64),

    #[error("initial cluster counts differ: N+ = {plus}, N- = {minus}")]
    AsymmetricCounts { plus: f64, minus: f64 },

    #[error("no real root above 1: F0 stays below {target} up to x = {searched}")]
    NoRealRoot { target: f64, searched: f64 },

    #[error("contour passes within {modulus:e} of a zero at angle {angle}")]
    ContourThroughZero { angle: f64, modulus: f64 },

    #[error("trajectory diverged at tau = {tau_re} + {tau_im}i")]
    Diverged { tau_re: f64, tau_im: f64 },

    #[error("Bromwich quadrature not converged at zeta = {zeta}: change {change:e}")]
    QuadratureNotConverged { zeta: f64, change: f64 },

    #[error("histogram has only {occupied} occupied bins")]
    DegenerateHistogram { occupied: usize },
}

impl Error {
    /// True for failures of a numerical method rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NegativeDensity { .. }
                | Error::Diverged { .. }
                | Error::QuadratureNotConverged { .. }
                | Error::ContourThroughZero { .. }
                | Error::NoRealRoot { .. }
        )
    }
}
