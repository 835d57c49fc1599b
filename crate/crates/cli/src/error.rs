use std::fmt;

use citnet_model::ModelError;
use citnet_signal::SignalError;
use citnet_tensor::TensorError;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_CONFIG: u8 = 3;
pub const EXIT_VERIFY: u8 = 4;

/// A failed command: the message for stderr and the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError { code: EXIT_DATA, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        CliError { code: EXIT_CONFIG, message: message.into() }
    }

    pub fn verify(message: impl Into<String>) -> Self {
        CliError { code: EXIT_VERIFY, message: message.into() }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::data(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

fn signal_code(e: &SignalError) -> u8 {
    match e.root() {
        SignalError::Format { .. } | SignalError::Io { .. } => EXIT_DATA,
        SignalError::InvalidArgument(_) => EXIT_USAGE,
        _ => EXIT_CONFIG,
    }
}

impl From<SignalError> for CliError {
    fn from(e: SignalError) -> Self {
        CliError { code: signal_code(&e), message: e.to_string() }
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let code = match &e {
            ModelError::Config(_) => EXIT_CONFIG,
            // An architecture that cannot be assembled is a bad invocation.
            ModelError::Architecture(_) => EXIT_USAGE,
            ModelError::NonFiniteLoss { .. } => EXIT_VERIFY,
            ModelError::Signal(s) => signal_code(s),
            ModelError::Data(_) | ModelError::Tensor(_) | ModelError::Io { .. } => EXIT_DATA,
        };
        CliError { code, message: e.to_string() }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
