//! Command-line driver: run configuration, checkpoints, grid export and
//! operation-count tables.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;
