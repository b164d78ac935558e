//! Dynamic influence tracking for SGD-trained models.
//!
//! The crate is `no_std` (with `alloc`) and contains every numerical piece:
//! model kernels, deterministic SGD with trajectory logging, the backward
//! influence sweep, baselines, and the downstream analytics. File formats,
//! loaders and the command-line front end live in the `dit-lab` crate.

#![no_std]

extern crate alloc;

pub mod analytics;
pub mod baselines;
pub mod data;
pub mod dit;
mod error;
pub mod linalg;
pub mod numkit;
pub mod trainer;

pub use error::{Error, Result};
