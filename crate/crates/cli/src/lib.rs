//! Command-line front end and HTTP service for `featsplat` scenes.

pub mod assets;
pub mod commands;
pub mod config;
pub mod error;
pub mod server;
pub mod sim;
pub mod views;

pub use commands::{run, Cli};
pub use error::{CliError, CliResult};
