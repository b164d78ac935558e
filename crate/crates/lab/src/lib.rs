//! Std companion to `dit-core`: trajectory file formats, dataset loaders,
//! JSON experiment configs, report emission and the `dit-lab` command line.

pub mod cli;
pub mod codec;
pub mod config;
mod error;
pub mod experiments;
pub mod io;
pub mod manifest;
pub mod report;

pub use error::{LabError, Result};
