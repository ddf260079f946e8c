//! Configuration and command layer of the `spherefield` binary.

pub mod config;
pub mod run;
