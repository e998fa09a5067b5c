//! Configuration, CSV output, the rayon executor and the experiment
//! commands behind the `sdecade` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod exec;
pub mod output;

pub use commands::{run, Command, Outcome};
pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
pub use exec::Rayon;
