//! Offline training, online serving and command-line tools built on
//! `dheb-core`.
//!
//! The offline phase (`retrain-daemon`) publishes a model file with an
//! atomic rename; the online phase (`serve`) watches that file and swaps
//! the new model in between requests.

pub mod commands;
pub mod config;
pub mod daemon;
pub mod error;
pub mod serve;
pub mod store;

pub use commands::{execute, Cli};
pub use error::{CliError, CliResult};
