//! One-bit distributed mean estimation for scale-location families.
//!
//! Each of `n` users holds one sample from `f((x - mu) / sigma) / sigma` and
//! may send the server a single bit. This crate provides the base densities,
//! the asymptotic constants that bound what any such protocol can achieve,
//! the threshold protocols themselves, and a deterministic Monte Carlo
//! harness comparing the two.

pub mod dist;
pub mod error;
pub mod numerics;
pub mod protocols;
pub mod report;
pub mod sim;
pub mod theory;

pub use dist::{BaseDensity, DensityKind, ScaleLocationModel};
pub use error::{Error, Result};
pub use theory::TheoryConstants;
