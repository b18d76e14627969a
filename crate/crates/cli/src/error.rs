use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{line}: {msg}")]
    Config { path: String, line: usize, msg: String },

    #[error("{0}")]
    Usage(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("experiment `{experiment}`: {source}")]
    Experiment {
        experiment: String,
        #[source]
        source: qsdlab_core::Error,
    },

    #[error("{failed} of {total} self-test checks failed")]
    SelftestFailed { failed: usize, total: usize },

    #[error(transparent)]
    Core(#[from] qsdlab_core::Error),
}

pub type CliResult<T> = Result<T, CliError>;

pub fn io_error(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}

fn core_exit_code(e: &qsdlab_core::Error) -> i32 {
    use qsdlab_core::Error as E;
    match e {
        E::Accuracy { .. } | E::Degenerate(_) | E::IndeterminateRate { .. } => 3,
        E::Extinction { .. } => 4,
        _ => 2,
    }
}

impl CliError {
    /// 0 success, 2 validation, 3 accuracy, 4 extinction.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Experiment { source, .. } | CliError::Core(source) => core_exit_code(source),
            CliError::SelftestFailed { .. } => 3,
            _ => 2,
        }
    }
}
