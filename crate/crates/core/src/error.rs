use thiserror::Error;

/// Errors raised across the crate. Variants map onto the CLI exit codes in
/// [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("failed to converge: {0}")]
    Convergence(String),

    #[error("infeasible schedule target: {0}")]
    InfeasibleTarget(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("iterate became non-finite at iteration {iteration} ({context})")]
    Divergence { iteration: usize, context: String },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("no viable configuration: {0}")]
    NoViableConfig(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("denoiser failure: {0}")]
    Denoiser(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence { .. } | Error::NoViableConfig(_) | Error::Convergence(_) => 3,
            Error::InfeasibleTarget(_) => 4,
            Error::Io(_) | Error::Csv(_) | Error::Denoiser(_) => 1,
            _ => 2,
        }
    }
}
