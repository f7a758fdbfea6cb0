//! Numerical building blocks: quadrature, 1-D optimization and root finding.

pub mod optimize;
pub mod quadrature;

pub use optimize::{bisect, golden_section_max, newton_bisect_increasing, scan_argmax, ScanResult};
pub use quadrature::{gauss_legendre8, integrate, integrate_to_infinity, Quadrature, Tolerance};
