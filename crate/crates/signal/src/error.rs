use thiserror::Error;

#[derive(Debug, Error)]
pub enum SignalError {
    /// Malformed input data; `at` locates the problem (byte offset, row, line).
    #[error("{source_name}: {at}: {msg}")]
    Format { source_name: String, at: String, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("layout error: {0}")]
    Layout(String),

    #[error("channel `{0}` has no cell in the electrode layout")]
    UnmappedChannel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("segment {index}: {source}")]
    Segment { index: usize, source: Box<SignalError> },

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub type Result<T, E = SignalError> = std::result::Result<T, E>;

impl SignalError {
    pub(crate) fn format(source_name: impl Into<String>, at: impl Into<String>, msg: impl Into<String>) -> Self {
        SignalError::Format { source_name: source_name.into(), at: at.into(), msg: msg.into() }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        SignalError::Io { path: path.display().to_string(), source }
    }

    /// The innermost error, looking through segment wrappers.
    pub fn root(&self) -> &SignalError {
        match self {
            SignalError::Segment { source, .. } => source.root(),
            e => e,
        }
    }
}
