use thiserror::Error;

/// Errors produced by the library. Diagnostics that are not fatal (undersampling,
/// zero-count probes, truncation below the return threshold) are carried as
/// warnings inside the corresponding result types instead.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("surviving mass underflowed at iteration {iteration}; truncation radius too small or model subcritical")]
    MassUnderflow { iteration: usize },

    #[error("state budget exceeded: {states} states requested, budget is {budget}")]
    BudgetExceeded { states: usize, budget: usize },

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("flow left the domain at t = {time}: coordinate {coordinate} = {value:e}")]
    StepSize {
        time: f64,
        coordinate: usize,
        value: f64,
    },

    #[error("all {particles} particles were absorbed simultaneously at step {step}")]
    TotalExtinction { particles: usize, step: usize },

    #[error("malformed model description: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
