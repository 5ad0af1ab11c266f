//! Command-line runner and HTTP job service for `topoforge`.
//!
//! [`run`] turns a sketch into a run directory of artifacts; [`server`]
//! exposes the same runner as an asynchronous job API; [`cli`] parses the
//! command line and layered configuration ([`config`]).

pub mod cli;
pub mod config;
pub mod run;
pub mod server;
