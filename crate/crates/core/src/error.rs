use thiserror::Error;

/// Errors raised by grid construction, the Poisson solvers, the Bregman loop
/// and the experiment front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: operands live on different grids")]
    GridMismatch,

    #[error("invalid box bounds [{lower}, {upper}]")]
    InvalidBounds { lower: f64, upper: f64 },

    #[error("function is infeasible for the box (node {node}, value {value})")]
    Infeasible { node: usize, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("inner conjugate gradients failed after {iterations} iterations (relative residual {residual:e})")]
    CgFailure { iterations: usize, residual: f64 },

    #[error("subproblem did not converge in {steps} Newton steps (defect {defect:e})")]
    SubproblemNotConverged { steps: usize, defect: f64 },

    #[error("iteration {k}: {source}")]
    Iteration {
        k: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("adjoint does not vanish on the boundary (node {node}, value {value:e})")]
    BoundaryNonzero { node: usize, value: f64 },

    #[error("adjoint vanishes identically on the grid")]
    ZeroAdjoint,

    #[error("unknown example '{name}'; available: {available}")]
    UnknownExample { name: String, available: String },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
