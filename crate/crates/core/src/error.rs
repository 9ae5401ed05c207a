use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    InvalidInput,
    Budget,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric: F[{row}][{col}] = {upper} but F[{col}][{row}] = {lower}")]
    Asymmetric {
        row: usize,
        col: usize,
        upper: i64,
        lower: i64,
    },

    #[error("matrix is singular (det F = 0)")]
    Singular,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("budget exceeded: {parameter} is {cap} but this computation needs {required}")]
    Budget {
        parameter: &'static str,
        required: u128,
        cap: u128,
    },

    #[error("arithmetic overflow in {0}")]
    Overflow(&'static str),

    #[error("missing table: {0}")]
    MissingTable(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("box construction failed: {0}")]
    Box(String),

    #[error("ill-conditioned: {0}")]
    Conditioning(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Budget { .. } | Error::Overflow(_) => ErrorKind::Budget,
            Error::Infeasible(_) | Error::Box(_) | Error::Conditioning(_) => ErrorKind::Infeasible,
            _ => ErrorKind::InvalidInput,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Refuses `required > cap` with a budget error naming `parameter`.
    pub(crate) fn check_budget(parameter: &'static str, required: u128, cap: u128) -> Result<()> {
        if required > cap {
            Err(Error::Budget {
                parameter,
                required,
                cap,
            })
        } else {
            Ok(())
        }
    }
}
