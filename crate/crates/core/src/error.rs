use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("vocabulary line {line}: {message} ({content:?})")]
    Vocabulary {
        line: usize,
        content: String,
        message: String,
    },

    #[error("merges line {line}: {message} ({content:?})")]
    Merges {
        line: usize,
        content: String,
        message: String,
    },

    #[error("character {ch:?} (U+{code:04X}) is not representable in the vocabulary", code = *.ch as u32)]
    Unrepresentable { ch: char },

    #[error("token id {0} is not in the vocabulary")]
    UnknownTokenId(u32),

    #[error("prompt {prompt:?} could not be tokenized: {source}")]
    Prompt {
        prompt: String,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(what: &'static str, msg: impl Into<String>) -> Self {
        Error::Format {
            what,
            message: msg.into(),
        }
    }

    /// True when the error stems from caller input rather than the engine.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_)
                | Error::Unrepresentable { .. }
                | Error::UnknownTokenId(_)
                | Error::Prompt { .. }
        )
    }
}
