use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("trap is unstable: 2 omega_z^2 = {two_wz2:.6e} exceeds omega_c^2 = {wc2:.6e} (V0 must not exceed q D0^2 B^2 / (8M))")]
    StabilityViolation { two_wz2: f64, wc2: f64 },

    #[error("radial mode frequencies are degenerate (omega_1 = 0)")]
    DegenerateFrequencies,

    #[error("laser intensity has no gradient at the trap centre (beam offset is zero)")]
    ZeroGradient,

    #[error("integration step produced a non-finite state at t = {t:.6e} s")]
    StepRejected { t: f64 },

    #[error("ion deconfined at t = {t:.6e} s: squared amplitude {amplitude_sq:.3e} m^2 exceeds bound")]
    Diverged { t: f64, amplitude_sq: f64 },

    #[error("averaging window [{start:.3e}, {end:.3e}] s contains no samples")]
    WindowEmpty { start: f64, end: f64 },

    #[error("thermal weight beyond the Fock cutoff {cutoff} is {tail:.3e} (limit 1e-3)")]
    TruncationInsufficient { cutoff: usize, tail: f64 },

    #[error("population leaked past the Fock cutoff {cutoff}: {leaked:.3e}")]
    CutoffExceeded { cutoff: usize, leaked: f64 },

    #[error("fit did not converge after {restarts} restarts (best residual {residual:.6e})")]
    NotConverged { restarts: usize, residual: f64 },

    #[error("fit failed: {0}")]
    FitFailed(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
