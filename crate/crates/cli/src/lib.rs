//! Library side of the `lrd-deconv` binary: run configs, stamped outputs and
//! the subcommands themselves.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
