use qndsim_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("input file {path}: {msg}")]
    Input { path: String, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Core(#[from] Error),
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}

impl CliError {
    /// 0 success, 2 config/usage, 3 numerical failure, 4 insufficient data,
    /// 1 anything else (IO).
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) | CliError::Input { .. } => 2,
            CliError::Io(_) => 1,
            CliError::Core(e) => match e {
                Error::InvalidParameter(_) | Error::DimensionCap { .. } => 2,
                Error::InsufficientData { .. }
                | Error::InsufficientDwells { .. }
                | Error::InsufficientTriggers { .. } => 4,
                _ => 3,
            },
        }
    }
}
