use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or image shape does not fit the operation.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A numeric parameter is outside its valid range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// An input value is outside the domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Layer wiring is inconsistent (sizes, pairings).
    #[error("structural error: expected {expected}, got {actual} ({context})")]
    Structural {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("normalization error: neuron {neuron} has weight sum {sum}")]
    Normalization { neuron: usize, sum: f64 },

    /// Malformed binary input; `field` names the offending part of the file.
    #[error("parse error in {field}: {message}")]
    Parse { field: String, message: String },

    #[error("configuration error for `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn structural(
        context: impl Into<String>,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::Structural {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn parse(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
