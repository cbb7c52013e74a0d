use thiserror::Error;

/// Failures of the driver, split by the exit code they map to.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, specs, configs or input files.
    #[error("invalid input: {0}")]
    Input(String),

    /// A computation broke down; `cell` names the (method, r) cell when there is one.
    #[error("numerical failure in {cell}: {source}")]
    Numerical {
        cell: String,
        #[source]
        source: lqo_core::Error,
    },

    /// Benchmark cells that failed numerically; the other cells completed.
    #[error("{} benchmark cell(s) failed: {}", .0.len(), .0.join(", "))]
    CellsFailed(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    /// Classifies a core error raised while computing `cell`.
    pub fn from_core(cell: impl Into<String>, e: lqo_core::Error) -> Self {
        match e {
            lqo_core::Error::Io(io) => CliError::Io(io),
            e if e.is_numerical() => CliError::Numerical {
                cell: cell.into(),
                source: e,
            },
            e => CliError::Input(format!("{}: {e}", cell.into())),
        }
    }

    /// Process exit code: 2 for invalid input, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical { .. } | CliError::CellsFailed(_) => 3,
            CliError::Input(_) | CliError::Io(_) => 2,
        }
    }
}

impl From<lqo_core::Error> for CliError {
    fn from(e: lqo_core::Error) -> Self {
        CliError::from_core("computation", e)
    }
}
