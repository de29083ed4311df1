use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    /// A caller violated an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Input parsed but breaks a domain invariant (e.g. a cyclic feeder).
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("unsupported version: {0}")]
    UnsupportedVersion(String),

    #[error("truncated input: {0}")]
    Truncated(String),

    #[error("schema violation in event {event_id}: {msg}")]
    Schema { event_id: u64, msg: String },

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("configuration error in `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}
