use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("variable index {index} out of range 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("weight of item {index} is negative or not finite: {weight}")]
    NegativeWeight { index: usize, weight: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("operation requires a polyhedral cover cone")]
    RequiresPolyhedral,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate instance: {0}")]
    Degenerate(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(
        "solver did not converge after {iterations} iterations \
         (primal residual {primal_residual:e}, dual residual {dual_residual:e}, gap {gap:e})"
    )]
    NonConvergence {
        iterations: usize,
        primal_residual: f64,
        dual_residual: f64,
        gap: f64,
    },

    #[error("witness repair charged a gap of {charged:e}, above the budget {budget:e}")]
    SigmaBudgetExceeded { charged: f64, budget: f64 },

    #[error("beta = {beta} is not below the rounding constant {alpha}")]
    BetaInfeasible { beta: f64, alpha: f64 },

    #[error(
        "sample budget exhausted after {samples} samples (best cover cost ratio {best_ratio})"
    )]
    BudgetExhausted { samples: u64, best_ratio: f64 },

    #[error("{what} of size {size} exceeds the limit {limit}")]
    TooLarge {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("sparsification stalled: {0}")]
    SparsifyStalled(String),
}
