//! Library side of the `trimer` command-line tool.

pub mod commands;
pub mod config;
pub mod schema;
