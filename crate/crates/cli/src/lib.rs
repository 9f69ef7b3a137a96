//! Command-line entry points and the HTTP service for interactive evolution.

pub mod api;
pub mod args;
pub mod commands;

pub use args::{Cli, Command};
