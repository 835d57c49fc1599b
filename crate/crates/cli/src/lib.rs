//! The `citnet` command line: each subcommand is a function from parsed
//! arguments to a result whose error carries the process exit code.

pub mod args;
pub mod commands;
pub mod error;
pub mod manifest;

pub use error::{CliError, EXIT_CONFIG, EXIT_DATA, EXIT_USAGE, EXIT_VERIFY};
