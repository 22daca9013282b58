use thiserror::Error;

/// Errors surfaced by the solver library.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("incompatible spaces or meshes: {0}")]
    Incompatible(String),

    #[error("linear solve failed to converge: residual {residual:e} after {iterations} iterations (target {target:e})")]
    SolverFailure {
        residual: f64,
        target: f64,
        iterations: usize,
    },

    #[error("fluid depth lost positivity at step {step}: min h = {min_h:e} (mean {mean_h:e})")]
    PositivityLost { step: usize, min_h: f64, mean_h: f64 },

    #[error("config error in field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("balance integration failed: {0}")]
    Balance(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
