//! Finite-alphabet laboratory for lossy source compression with the
//! likelihood encoder: point-to-point, Wyner-Ziv-style side information,
//! and two-encoder distributed setups, plus soft-covering diagnostics,
//! excess-distortion exponents, and a binning-based encoder to compare
//! against.

pub mod binning;
pub mod codebook;
pub mod config;
pub mod distortion;
pub mod encoder;
pub mod error;
pub mod prob;
pub mod rd;
pub mod softcover;
pub mod stream;
pub mod systems;
