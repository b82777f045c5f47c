//! Library half of the `anomix` command: configuration, the four commands
//! and the run builders they share.

pub mod commands;
pub mod config;

pub use commands::{cmd_mix_test, cmd_ns_check, cmd_sweep, cmd_validate, Exit, GlobalOpts};
pub use config::RunConfig;
