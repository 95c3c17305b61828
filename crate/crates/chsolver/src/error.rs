//! Error type shared across the solver.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or parameters outside the admissible range.
    #[error("configuration error: {0}")]
    Config(String),

    /// Assembly failed (degenerate cell, level mismatch, ...).
    #[error("assembly error: {0}")]
    Assembly(String),

    /// Grid-transfer data is missing or inconsistent.
    #[error("hierarchy error: {0}")]
    Hierarchy(String),

    /// Smoother cannot run (zero diagonal entry).
    #[error("smoother error: {0}")]
    Smoother(String),

    /// A dense factorization failed (matrix not SPD).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Krylov solver breakdown or non-convergence.
    #[error("solver error: {0}")]
    Solver(String),

    /// The preconditioner was detected to be indefinite.
    #[error("preconditioner error: {0}")]
    Preconditioner(String),

    /// Newton iteration did not converge within the iteration budget.
    #[error("newton failure at step {step}: {detail}")]
    NewtonFailure { step: usize, detail: String },

    /// Non-finite value where a finite one is required.
    #[error("input error: {0}")]
    Input(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 3 for configuration problems, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Input(_) => 3,
            _ => 2,
        }
    }
}
