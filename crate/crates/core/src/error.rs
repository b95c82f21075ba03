use thiserror::Error;

/// Errors raised anywhere in the model stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A physical or numerical parameter is outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),
    /// A pulse program or protocol could not be assembled.
    #[error("protocol construction error: {0}")]
    Construction(String),
    /// Population conservation or another numeric invariant broke.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// Absorbing-chain analysis did not converge.
    #[error("analysis error: {0}")]
    Analysis(String),
    /// Problem too large for the chosen solver.
    #[error("budget error: {0}")]
    Budget(String),
    /// Configuration file or override could not be resolved.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable tag used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parameter(_) => "parameter",
            Error::Construction(_) => "construction",
            Error::Numeric(_) => "numeric",
            Error::Analysis(_) => "analysis",
            Error::Budget(_) => "budget",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
