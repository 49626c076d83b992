//! Config parsing and subcommands behind the `pmdrift` binary.

pub mod commands;
pub mod config;
pub mod verify;

pub use commands::{CliError, CliResult};
pub use config::{parse_config, ConfigError, ConfigErrors, RunConfig};
