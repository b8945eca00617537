use std::path::PathBuf;

/// Exit status for success.
pub const EXIT_OK: i32 = 0;
/// Output could not be written.
pub const EXIT_OUTPUT: i32 = 1;
/// Bad flags or configuration.
pub const EXIT_USAGE: i32 = 2;
/// Missing or malformed input data.
pub const EXIT_INPUT: i32 = 3;
/// Training hit a non-finite loss.
pub const EXIT_NUMERIC: i32 = 4;
/// A gradient check exceeded its tolerance.
pub const EXIT_GRADCHECK: i32 = 5;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("unknown config key `{key}` on line {line}")]
    UnknownKey { line: usize, key: String },
    #[error("{}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {msg}", path.display())]
    Input { path: PathBuf, msg: String },
    #[error("{}: row {row}: {msg}", path.display())]
    Row { path: PathBuf, row: usize, msg: String },
    #[error("{}: {source}", path.display())]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] depmax_core::Error),
    #[error("gradient check failed: max relative error {max_rel_err:e} exceeds {tolerance:e}")]
    GradCheck {
        max_rel_err: f64,
        tolerance: f64,
        /// Per-block lines, still printed to standard output.
        report: String,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use depmax_core::Error as E;
        match self {
            Self::Usage(_) | Self::Config { .. } | Self::UnknownKey { .. } => EXIT_USAGE,
            Self::Read { .. } | Self::Input { .. } | Self::Row { .. } => EXIT_INPUT,
            Self::Write { .. } => EXIT_OUTPUT,
            Self::GradCheck { .. } => EXIT_GRADCHECK,
            Self::Core(e) => match e {
                E::NonFiniteLoss { .. } => EXIT_NUMERIC,
                E::InvalidParameter(_) | E::InvalidBandwidth(_) | E::Folds { .. } => EXIT_USAGE,
                _ => EXIT_INPUT,
            },
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
