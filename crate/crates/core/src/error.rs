use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("field has {got} values but the grid has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error("field value at node {0} is not finite")]
    NonFiniteValue(usize),
    #[error("invalid Lebesgue exponent {0} (must be >= 1 or +inf)")]
    InvalidExponent(f64),
    #[error("invalid operator: {0}")]
    InvalidOperator(String),
    #[error("potential is singular at node {node} (distance {distance:e} from the origin); use an even node count so the grid straddles the origin")]
    SingularPotential { node: usize, distance: f64 },
    #[error("spectrum check failed: {0}")]
    Spectrum(String),
    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error("time must be positive, got {0}")]
    NonPositiveTime(f64),
    #[error("spectral power undefined: base {base} raised to {exponent}")]
    InvalidPower { base: f64, exponent: f64 },
    #[error("invalid equation mode: {0}")]
    InvalidMode(String),
    #[error("operation requires a nonzero field")]
    ZeroField,
    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { what: &'static str, iterations: usize, residual: f64 },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("Picard iteration diverged at iterate {iteration} (increment grew from {previous:e} to {current:e})")]
    PicardDivergence { iteration: usize, previous: f64, current: f64 },
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("eigendecomposition failed: {0}")]
    Eigen(String),
}
