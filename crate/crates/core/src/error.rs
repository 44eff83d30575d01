use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Pitch too close to ±π/2, where the angular-rate map is undefined.
    #[error("attitude singularity: |theta| = {theta} is within {guard} of pi/2")]
    Singularity { theta: f64, guard: f64 },

    /// Not enough buffered samples to fit an operator yet.
    #[error("koopman model not ready: {have} samples buffered, {need} required")]
    NotReady { have: usize, need: usize },

    #[error("ill-conditioned regression: {0}")]
    Conditioning(String),

    /// Malformed artifact file.
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("{0}")]
    Config(#[from] crate::config::ConfigError),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
