#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod dft;
pub mod error;
pub mod inference;
pub mod mollify;
pub mod pathgen;
pub mod quadrature;
pub mod special;
pub mod spectral;
pub mod stable;

pub use error::{Error, Result};
