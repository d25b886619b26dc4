//! Simulator, file formats and command implementations for the `srosync`
//! command-line tool.

pub mod cli;
pub mod config;
mod error;
pub mod ops;
pub mod report;
pub mod sim;
pub mod wav;

pub use error::CliError;
