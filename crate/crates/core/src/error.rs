use thiserror::Error;

/// Errors produced anywhere in the workbench.
#[derive(Debug, Error)]
pub enum Error {
    /// The scenario document could not be parsed.
    #[error("failed to parse scenario: {0}")]
    Parse(#[from] serde_json::Error),

    /// A parameter violates its documented constraint.
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    /// Matrix or map dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A numerical routine failed (singular system, bracket failure, non-finite data).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than runtime failures.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Parse(_) | Error::Invalid { .. } | Error::Shape(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
