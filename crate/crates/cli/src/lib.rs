//! Command-line entry points and the annotation HTTP service.

pub mod cli;
pub mod commands;
pub mod config;
pub mod manifest;
pub mod server;
