use thiserror::Error;

/// Errors raised by the spectral and inverse routines.
#[derive(Debug, Error)]
pub enum SlqError {
    #[error("matrix {name} is not an orthogonal projector (deviation {deviation:.3e})")]
    NonProjector { name: &'static str, deviation: f64 },

    #[error("sigma is not Hermitian at x = {x} (deviation {deviation:.3e})")]
    NonHermitianSigma { x: f64, deviation: f64 },

    #[error("H2 violates H2 = H2^dagger = T2 H2 T2 (deviation {deviation:.3e})")]
    H2GaugeViolation { deviation: f64 },

    #[error("invalid gauge matrix (deviation {deviation:.3e})")]
    InvalidGauge { deviation: f64 },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("shifted eigenvalue {lambda} + {shift} is negative")]
    NegativeShiftedEigenvalue { lambda: f64, shift: f64 },

    #[error("found {found} zeros of det W0 on [0,1) counted with multiplicity, expected {expected}")]
    RootCountMismatch { found: usize, expected: usize },

    #[error("W0 is singular on the residue contour around r = {center}")]
    SingularContour { center: f64 },

    #[error("ODE integrator failed at x = {x}: step size underflow")]
    IntegratorFailure { x: f64 },

    #[error("level {level}: found {found} eigenvalues with sqrt in [{lo:.6}, {hi:.6}), expected {expected}")]
    SlotMismatch {
        level: usize,
        found: usize,
        expected: usize,
        lo: f64,
        hi: f64,
    },

    #[error("lambda = {lambda} is an eigenvalue (smallest singular value {smin:.3e})")]
    AtEigenvalue { lambda: String, smin: f64 },

    #[error("residue contour around lambda = {lambda} passes through an eigenvalue")]
    ContourThroughEigenvalue { lambda: f64 },

    #[error("weight matrix at lambda = {lambda} did not converge (last change {change:.3e})")]
    NoConvergence { lambda: f64, change: f64 },

    #[error("index sets do not match: {0}")]
    IndexSetMismatch(String),

    #[error("no n0 <= {limit} makes the eigenvalue groups disjoint")]
    NoValidN0 { limit: usize },

    #[error("main equation ill-conditioned at x = {x} (condition estimate {cond:.3e})")]
    IllConditioned { x: f64, cond: f64 },

    #[error("grids differ: {0}")]
    GridMismatch(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SlqError>;
