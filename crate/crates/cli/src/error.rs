use fic_core::FicError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("data: {0}")]
    Data(String),

    #[error("numerical: {0}")]
    Numerical(String),

    #[error("io: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    /// Sorts a library error; input problems count as `fallback`.
    pub fn from_core(e: FicError, fallback: fn(String) -> CliError) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else if matches!(e, FicError::InvalidResponse { .. }) {
            CliError::Data(e.to_string())
        } else {
            fallback(e.to_string())
        }
    }

    /// One line, safe to parse: `error kind=<kind> code=<n> message=<text>`.
    pub fn line(&self) -> String {
        let kind = match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Numerical(_) => "numerical",
            CliError::Io(_) => "io",
        };
        let msg = match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Numerical(m) | CliError::Io(m) => m,
        };
        let msg = msg.replace(['\n', '\r'], " ");
        format!("error kind={kind} code={} message={msg}", self.exit_code())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
