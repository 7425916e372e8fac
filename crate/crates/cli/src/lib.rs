//! Configuration-driven front end: `price`, `dual`, `track`,
//! `check-integrand` and `selfcheck`.
//!
//! Exit codes: 0 when every contract holds, 1 for configuration or I/O
//! errors, 2 for contract violations and numerical failures.

pub mod commands;
pub mod config;
pub mod output;
pub mod selfcheck;

use entropic_pricer_core::PricerError;

pub use commands::{cmd_check_integrand, cmd_dual, cmd_price, cmd_selfcheck, cmd_track, Outcome, RunOptions};
pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Pricer(#[from] PricerError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Pricer(e) if e.is_config() => 1,
            CliError::Pricer(_) => 2,
        }
    }
}
