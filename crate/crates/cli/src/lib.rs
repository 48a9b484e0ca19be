//! Command-line front end: configuration, subcommands and output files.

pub mod app;
pub mod commands;
pub mod config;
pub mod output;
