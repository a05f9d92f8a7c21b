//! File formats, experiment configuration and the Monte Carlo harness on
//! top of `hsas-core`.

pub mod config;
pub mod error;
pub mod harness;
pub mod io;

pub use error::{Error, Result};
