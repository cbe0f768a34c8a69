//! File formats, run configuration and command implementations behind the
//! `roadgamma` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use commands::{run, Cli, Command};
pub use config::{PlaneSource, RunConfig};
pub use error::{CliError, CliResult};
