pub mod eval;
pub mod fusion_demo;
pub mod gen_sparse;
pub mod prompt_emit;

use std::path::{Path, PathBuf};

use crate::io::Diagnostic;

/// Failures after argument parsing; all map to the data-error exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{} input defect(s)", .0.len())]
    Invalid(Vec<Diagnostic>),
    #[error(transparent)]
    Core(#[from] geoalign::Error),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl From<Vec<Diagnostic>> for CliError {
    fn from(d: Vec<Diagnostic>) -> Self {
        CliError::Invalid(d)
    }
}

pub(crate) fn write_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    }
}

pub type CmdResult = Result<String, CliError>;
