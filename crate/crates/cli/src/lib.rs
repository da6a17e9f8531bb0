//! Configuration layer of the `rto` command-line runner.

pub mod config;
