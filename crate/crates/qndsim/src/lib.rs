//! Configuration, CSV formats, parallel drivers and subcommands for the
//! `qndsim` command-line tool.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
