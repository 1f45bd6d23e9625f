use thiserror::Error;

/// Errors raised by the solvers, the inversion loop and dataset I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("CFL condition violated: max|mu|*omega_max*dt/dx = {cfl:.6} > 1")]
    Cfl { cfl: f64 },

    #[error("shape mismatch for {what}: expected {expected}, found {found}")]
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("solution blew up at time step {step}: |g|_inf = {norm:e}")]
    BlowUp { step: usize, norm: f64 },

    #[error("non-finite value in the field at time step {step}")]
    NonFinite { step: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no datum for experiment pair (i={i}, j={j})")]
    MissingDatum { i: usize, j: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Shape {
            what,
            expected,
            found,
        })
    }
}
