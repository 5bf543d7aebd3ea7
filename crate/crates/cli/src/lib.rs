//! trajforge command-line pipeline: configuration, persistent formats,
//! staged commands and the experiment harness.

pub mod commands;
pub mod config;
pub mod experiment;
pub mod formats;
pub mod harness;
pub mod manifest;
pub mod svg;
