//! Config-file and expression front end for the `starhjb` binary.

pub mod config;
pub mod expr;
