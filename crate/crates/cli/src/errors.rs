//! Error classification for process exit codes.

use std::fmt;
use std::path::Path;

/// Failures sorted by exit code: 1 for bad invocations, 2 for unusable
/// inputs or artifacts, 3 for numerical breakdown during computation.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// File-system failure while writing our own artifacts.
pub fn io_data(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

impl From<pulsebench_core::Error> for CliError {
    fn from(e: pulsebench_core::Error) -> Self {
        use pulsebench_core::Error as E;
        match e {
            // Bad knob values are invocation problems.
            E::InvalidConfig { .. } | E::DegenerateFraction { .. } | E::NonPhysiologicalRate { .. } => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<pulsebench_nn::Error> for CliError {
    fn from(e: pulsebench_nn::Error) -> Self {
        use pulsebench_nn::Error as E;
        match e {
            // Computation degenerated rather than the inputs being unreadable.
            E::DegenerateBatch { .. } | E::NonScalarOutput { .. } | E::UnstableState { .. } => {
                CliError::Numeric(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<pulsebench_eval::Error> for CliError {
    fn from(e: pulsebench_eval::Error) -> Self {
        use pulsebench_eval::Error as E;
        match e {
            E::NonFiniteLoss { .. } | E::NonFinitePrediction { .. } => {
                CliError::Numeric(e.to_string())
            }
            E::InvalidConfig(_) => CliError::Usage(e.to_string()),
            E::Fold { fold, source } => {
                let inner = CliError::from(*source);
                let msg = format!("fold {fold} failed: {inner}");
                match inner {
                    CliError::Usage(_) => CliError::Usage(msg),
                    CliError::Data(_) => CliError::Data(msg),
                    CliError::Numeric(_) => CliError::Numeric(msg),
                }
            }
            E::Nn(inner) => CliError::from(inner),
            _ => CliError::Data(e.to_string()),
        }
    }
}
