use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] sdecade_core::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for problems with the configuration or the filesystem, 1 for
    /// numerical failures at run time.
    pub fn exit_code(&self) -> i32 {
        use sdecade_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Core(
                E::Configuration(_)
                | E::DimensionMismatch { .. }
                | E::InvalidArgument(_)
                | E::DepthExceeded { .. }
                | E::NotDifferentiable { .. }
                | E::MissingJacobian(_)
                | E::NonFiniteInput(_),
            ) => 2,
            CliError::Core(_) => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
