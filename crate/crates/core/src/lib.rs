//! Randomized conditional independence testing with random Fourier features.
//!
//! - [`features`]: sample matrices, median bandwidth, Fourier feature maps
//! - [`wchi2`]: weighted chi-square null distributions
//! - [`citest`]: RCoT, RCIT and Fisher z
//! - [`synth`]: simulation designs
//! - [`eval`]: calibration, power and runtime harnesses
//! - [`discovery`]: PC, d-separation and structural Hamming distance

// Negated comparisons are used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod citest;
pub mod discovery;
pub mod error;
pub mod eval;
pub mod features;
pub mod seed;
pub mod synth;
pub mod wchi2;

pub use citest::{fisher_z, rcit, rcot, ApproxMethod, CiTestConfig, CiTestResult};
pub use error::{Error, Result};
pub use features::DataMatrix;
pub use wchi2::WeightedChiSquareDist;
