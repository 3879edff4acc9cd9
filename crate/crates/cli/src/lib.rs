//! Experiment harness: configuration, subcommands and result records.

pub mod commands;
pub mod config;
pub mod record;
