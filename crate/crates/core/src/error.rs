use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("index {index} out of range for {what} of length {len}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// Logistic fit did not admit a finite maximizer.
    #[error("singular propensity fit: {0}")]
    Singular(String),

    #[error("rank-deficient system (condition number {condition:.3e}); collinear columns: {columns:?}")]
    RankDeficient {
        condition: f64,
        columns: Vec<String>,
    },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("parse error in {}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("monte carlo run failed: {0}")]
    Run(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Process exit code for the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Dimension { .. }
            | Error::IndexOutOfRange { .. }
            | Error::Validation(_)
            | Error::Parse { .. }
            | Error::DegenerateData(_) => 2,
            Error::Infeasible(_) => 3,
            _ => 1,
        }
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Dimension {
            what,
            expected,
            found,
        });
    }
    Ok(())
}
