use thiserror::Error;

/// Failure classes of the command line, each with its own exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numeric(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl From<lrd_deconv::Error> for CliError {
    fn from(err: lrd_deconv::Error) -> Self {
        use lrd_deconv::Error as E;
        match err {
            E::InvalidParameter(_)
            | E::Shape(_)
            | E::Parse(_)
            | E::KernelDomain { .. }
            | E::MissingTableEntry { .. }
            | E::SizeLimit { .. }
            | E::Regime { .. } => CliError::Config(err.to_string()),
            _ => CliError::Numeric(err.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
