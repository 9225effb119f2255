use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid surface: {0}")]
    InvalidSurface(String),

    #[error("point at distance {distance} is not uniquely projectable (reach {reach})")]
    NotUniquelyProjectable { distance: f64, reach: f64 },

    #[error("point at distance {distance} is not on the surface")]
    NotOnSurface { distance: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("problem definition: {0}")]
    InvalidProblem(String),

    #[error("off-surface point lies in no drift region")]
    NoRegionMatched,

    #[error("diffusion degenerate in normal direction: |sigma^T n| = {0:e}")]
    DegenerateDiffusion(f64),

    #[error("no admissible epsilon on the search grid (sup |alpha| = {alpha_sup})")]
    NoValidEpsilon { alpha_sup: f64 },

    #[error("inverse did not converge, best residual {residual:e}")]
    InverseDidNotConverge { residual: f64 },

    #[error("{fine_n} fine steps are not divisible into {n} coarse steps")]
    NotDivisible { fine_n: usize, n: usize },

    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },

    #[error("degenerate rate fit: {0}")]
    DegenerateFit(String),

    #[error("{aborted} of {reps} repetitions aborted")]
    TooManyAborts { aborted: usize, reps: usize },

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
