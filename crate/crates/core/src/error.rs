use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid truncation: photon {photon}, phonon {phonon} (both must be >= 1)")]
    InvalidTruncation { photon: usize, phonon: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("operands live on different Hilbert spaces")]
    SpaceMismatch,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("squeezing is singular: |2 Omega_p| = {two_omega_p} >= Delta_aL = {delta_al}")]
    SingularSqueezing { two_omega_p: f64, delta_al: f64 },

    #[error("dressed Hamiltonian requires Delta_sigma = 0, got {0}")]
    DetunedAtom(f64),

    #[error("operator is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("eigendecomposition failed")]
    EigenFailure,

    #[error("no gap minimum inside bracket ({lo}, {hi}); minimum found at {at}")]
    NoMinimumInBracket { lo: f64, hi: f64, at: f64 },

    #[error("label tracking lost: hybridization overlap {overlap:.3} below {threshold}")]
    TrackingLost { overlap: f64, threshold: f64 },

    #[error("label {0} is outside the truncated space")]
    UnknownLabel(String),

    #[error("integrator step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },

    #[error("integration exceeded {0} steps")]
    TooManySteps(usize),

    #[error("steady state not found: {0}")]
    SteadyState(String),

    #[error("sparse factorization failed: {0}")]
    Factorization(String),

    #[error("input state is not stationary (residual {0:e})")]
    NotStationary(f64),

    #[error("correlation not decayed: |C(tau_max)| / |C(0)| = {ratio:e}")]
    NotDecayed { ratio: f64 },

    #[error("cross correlation undefined: <a^dag a> = {photons:e}, <b^dag b> = {phonons:e}")]
    VanishingOccupation { photons: f64, phonons: f64 },

    #[error("resonant denominator {0:e} in perturbative sum")]
    ResonantDenominator(f64),

    #[error("perturbation order {0} is not supported (1..=3)")]
    UnsupportedOrder(usize),

    #[error("state norm vanished during trajectory {seed}")]
    ZeroNorm { seed: u64 },

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("trajectory records do not share a sample grid")]
    SampleGridMismatch,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
