use std::path::PathBuf;

/// Errors produced across the simulator, learners and file formats.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    #[error("non-finite numeric input: {0}")]
    NumericInput(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("selection error: {0}")]
    Selection(String),

    #[error("training diverged at epoch {epoch}: {message}")]
    TrainingDiverged {
        epoch: usize,
        message: String,
        /// Flat parameters from the last step whose loss was finite.
        last_finite: Vec<f64>,
    },

    #[error("worker failed on scenario `{scenario_id}`: {message}")]
    Worker {
        scenario_id: String,
        message: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
