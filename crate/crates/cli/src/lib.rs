//! Configuration, file formats and subcommand pipelines behind the `finmet` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod record;
pub mod svg;
pub mod table;
pub mod touchstone;
