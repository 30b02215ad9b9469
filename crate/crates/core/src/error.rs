use thiserror::Error;

/// Errors produced anywhere in the crate.
///
/// Each variant maps onto one process exit code of the `aniscale` binary, see
/// [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("divergent integral: {0}")]
    Divergent(String),

    #[error(
        "quadrature did not converge after {cells} cells (estimate {estimate:.3e}, tol {tol:.3e})"
    )]
    NonConvergence {
        cells: usize,
        estimate: f64,
        tol: f64,
    },

    #[error("excluded parameter case: {0}")]
    Excluded(String),

    #[error("unsupported case: {0}")]
    Unsupported(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    /// Exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonConvergence { .. } | Error::Divergent(_) => 3,
            Error::Excluded(_) | Error::Unsupported(_) => 4,
            _ => 2,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<toml::ser::Error> for Error {
    fn from(e: toml::ser::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
