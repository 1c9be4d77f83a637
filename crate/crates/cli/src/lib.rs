//! Experiment pipelines behind the `dymon` command-line tool.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod error;
pub mod workloads;
