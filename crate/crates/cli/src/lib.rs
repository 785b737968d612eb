//! Subcommand implementations for the `catwgan` binary.

pub mod commands;
pub mod config;
pub mod pipeline;
