//! Command-line front end for the `cev-core` simulator.

// `!(a < b)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod commands;
pub mod error;
pub mod format;
pub mod manifest;
pub mod svg;

pub use args::Cli;
pub use commands::run;
pub use error::CliError;
