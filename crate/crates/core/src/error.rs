use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension {0}: need n >= 2")]
    InvalidDimension(usize),

    #[error("index {index} out of range for dimension {dim}")]
    InvalidIndex { index: usize, dim: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite or malformed data: {0}")]
    Data(String),

    #[error("internal consistency failure: {0}")]
    Internal(String),

    #[error("configuration error{}: {message}", patch_suffix(.patches))]
    Config {
        message: String,
        patches: Vec<usize>,
    },

    #[error("point outside field domain: {0}")]
    Domain(String),

    #[error("linear solver did not converge after {iterations} iterations (relative residual {final_residual:.3e})")]
    SolverFailure {
        iterations: usize,
        final_residual: f64,
        residual_history: Vec<f64>,
    },

    #[error("field mode mismatch: {0}")]
    Mode(String),

    #[error("series too short: {0}")]
    InsufficientSeries(String),

    #[error("i/o error: {0}")]
    Io(String),
}

fn patch_suffix(patches: &[usize]) -> String {
    match patches {
        [] => String::new(),
        [one] => format!(" (patch {one})"),
        many => {
            let list: Vec<String> = many.iter().map(|p| p.to_string()).collect();
            format!(" (patches {})", list.join(", "))
        }
    }
}

impl Error {
    pub fn config(message: impl Into<String>) -> Self {
        Error::Config {
            message: message.into(),
            patches: Vec::new(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
