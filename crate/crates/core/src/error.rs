use thiserror::Error;

use crate::grid::Representation;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("points_per_dim must be a power of two, got {0}")]
    NotPowerOfTwo(usize),
    #[error("configuration space needs {bytes} bytes ({points} points), budget is {budget} bytes")]
    BudgetExceeded { points: u128, bytes: u128, budget: u128 },
    #[error("invalid grid parameter: {0}")]
    InvalidGrid(String),
    #[error("mass must be positive, got {0}")]
    NonPositiveMass(f64),
    #[error("averaging length must be non-negative, got {0}")]
    NegativeAveragingLength(f64),
    #[error("wavefunction is in {found:?} representation, expected {expected:?}")]
    WrongRepresentation {
        expected: Representation,
        found: Representation,
    },
    #[error("operands live on different grids")]
    GridMismatch,
    #[error("shape of values does not match the grid")]
    ShapeMismatch,
    #[error("history does not cover t = {t} at step {dt}")]
    InsufficientHistory { t: f64, dt: f64 },
    #[error("stability guard violated: dt * max|H| = {0:.3e} > 0.5")]
    StabilityGuard(f64),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("wavefunction vanishes everywhere (all points below the node threshold)")]
    AllNodes,
    #[error("log-log fit needs at least 3 usable points, got {0}")]
    DegenerateFit(usize),
    #[error("node mask covers {covered:.1}% of the lattice, diagnostics need at least half unmasked")]
    MaskCoverage { covered: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
