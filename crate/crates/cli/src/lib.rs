//! Command-line front end for the radial sigma-model collapse simulator.

pub mod commands;
pub mod error;
pub mod io;

pub use error::{CliError, CliResult};
