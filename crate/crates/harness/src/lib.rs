//! Configuration, output and experiment driver for the `pcahn` command line.

pub mod checks;
pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod output;
