//! Error type shared by every module of the crate.

/// Errors produced by the numerical routines.
///
/// The CLI maps these onto exit codes: input problems exit with 2,
/// numerical failures with 3 and identity violations with 4.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is singular or ill-conditioned (condition estimate {cond:.3e})")]
    IllConditioned { cond: f64 },

    #[error("eigenvalue iteration failed: {0}")]
    EigenFailure(String),

    #[error("subspaces are not complementary (joint rank {rank} in ambient dimension {ambient})")]
    NotComplementary { rank: usize, ambient: usize },

    #[error("projectors are not conjugable locally: |p - q| = {norm:.6} >= 1")]
    NotConjugable { norm: f64 },

    #[error("operator is not hyperbolic (spectral margin {margin:.3e})")]
    NotHyperbolic { margin: f64 },

    #[error("contour passes too close to the spectrum (distance {dist:.3e}, required {required:.3e})")]
    ContourTooClose { dist: f64, required: f64 },

    #[error("quadrature did not converge: {0}")]
    QuadratureFailure(String),

    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("requested time {t} is outside the window [{lo}, {hi}]")]
    OutOfWindow { t: f64, lo: f64, hi: f64 },

    #[error("horizon {horizon} exhausted before the subspace stabilised (last increment {increment:.3e})")]
    HorizonExhausted { horizon: f64, increment: f64 },

    #[error("dichotomy smallness certificate violated: |H| = {h_norm:.3e} > {bound:.3e}; increase the tail shift")]
    CertificateViolated { h_norm: f64, bound: f64 },

    #[error("Neumann series stagnated after {iterations} iterations (increment {increment:.3e})")]
    SeriesStagnation { iterations: usize, increment: f64 },

    #[error("singular denominator block (condition estimate {cond:.3e})")]
    SingularBlock { cond: f64 },

    #[error("Green kernel envelope violated (fitted growth rate {rate:.3e}); check the projector or enlarge the tail")]
    KernelEnvelope { rate: f64 },

    #[error("eigenvalue lingers within {tol:.3e} of the imaginary axis near t = {t}; crossing cannot be resolved")]
    UnresolvableCrossing { t: f64, tol: f64 },

    #[error("no admissible restriction interval: the path never becomes hyperbolic outside [-{delta}, {delta}]")]
    NoAdmissibleDelta { delta: f64 },

    #[error("paths do not chain: |a(1) - b(0)| = {gap:.3e}")]
    EndpointMismatch { gap: f64 },

    #[error("identity violated: {0}")]
    IdentityViolation(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code the CLI uses for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::DimensionMismatch(_) | Error::OutOfWindow { .. } => 2,
            Error::IdentityViolation(_) => 4,
            _ => 3,
        }
    }
}
