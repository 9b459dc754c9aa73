//! Meshfree curriculum-learning PIELM solver with Gaussian RBF features.

pub mod assembly;
pub mod basis;
pub mod curriculum;
pub mod error;
pub mod geometry;
pub mod lsq;
pub mod oracles;
pub mod rng;
pub mod runner;
pub mod sigma;

pub use error::{Error, Result};
