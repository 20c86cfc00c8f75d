//! Batch front end: configuration parsing and the `cpl` subcommands.

pub mod config;
pub mod error;
pub mod run;
