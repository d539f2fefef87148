//! Error type shared across the crate.

use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("step size {dt:e} exceeds the CFL bound {bound:e}")]
    CflExceeded { dt: f64, bound: f64 },

    #[error(
        "support violation at t = {time}: mass fraction {fraction:e} within {cells} cells of the box edge"
    )]
    SupportViolation {
        time: f64,
        fraction: f64,
        cells: usize,
    },

    #[error("maximum principle violated at t = {time}: max p = {max_p} exceeds bound {bound}")]
    MaxPrincipleViolation { time: f64, max_p: f64, bound: f64 },

    #[error("nonfinite value in {context} at t = {time}")]
    NonFinite { context: String, time: f64 },

    #[error("{}: parse error: {message}", path.display())]
    Parse { path: PathBuf, message: String },

    #[error("{}: {message}", path.display())]
    BadFormat { path: PathBuf, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("missing sweep entries: {0}")]
    MissingEntries(String),
}

impl Error {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit code class: 2 for bad user input, 3 for I/O and file
    /// format trouble, 1 for everything that means "a check failed".
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::BadFormat { .. } => 3,
            Error::Parse { .. }
            | Error::Validation(_)
            | Error::InvalidParameter(_)
            | Error::InvalidInput(_)
            | Error::InvalidGrid(_)
            | Error::InvalidField(_) => 2,
            _ => 1,
        }
    }
}
