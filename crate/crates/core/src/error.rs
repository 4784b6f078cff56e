use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{origin}:{line}: invalid UTF-8")]
    Decode { origin: String, line: usize },

    #[error("{origin}:{line}: {message}")]
    Parse {
        origin: String,
        line: usize,
        message: String,
    },

    #[error("training failed: {0}")]
    Training(String),

    #[error("unknown language `{0}`")]
    UnknownLanguage(String),

    #[error("feature `{feature}` of kind {kind} is not in any language model")]
    NotInDomain { kind: String, feature: String },

    #[error("model for language `{language}` has no {kind} features")]
    ModelNotTrained { language: String, kind: String },

    #[error("model consistency: {0}")]
    Consistency(String),

    #[error("model file: {0}")]
    Load(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("evaluation: {0}")]
    Eval(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by invalid settings rather than bad data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
