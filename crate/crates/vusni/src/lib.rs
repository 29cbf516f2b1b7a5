//! File formats, a parallel Monte Carlo runner and the `vusni` command line
//! on top of [`vusni_core`].
//!
//! ```no_run
//! use vusni::io::load_csv;
//! use vusni_core::fit::{fit, FitOptions};
//!
//! let data = load_csv("study.csv", None)?;
//! let model = fit(&data, &FitOptions::default())?;
//! println!("{}", serde_json::to_string_pretty(&vusni::report::FitReport::new(&model, &data, None))?);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

use std::path::PathBuf;

pub mod cli;
pub mod io;
pub mod mc;
pub mod report;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{source_name}: line {line}: {message}")]
    Row { source_name: String, line: u64, message: String },

    #[error("{source_name}: {message}")]
    Format { source_name: String, message: String },

    #[error(transparent)]
    Core(#[from] vusni_core::Error),

    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit status: 2 for numerical failures, 3 for everything that
    /// points at the input (files, formats, invalid data).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Core(e) if e.is_numerical() => 2,
            _ => 3,
        }
    }
}
