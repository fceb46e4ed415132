//! Neural-rejection defense for deep-learning modulation classifiers.
//!
//! The crate is organised bottom-up:
//!
//! - [`dataset`]: synthetic I/Q frame generation, the `AMCD` binary format,
//!   stratified splits and set I / set II evaluation splits.
//! - [`nn`]: a small convolutional network with explicit backpropagation,
//!   label smoothing and Gaussian-noise-augmented training.
//! - [`svm`]: an SMO dual solver for RBF machines and the one-vs-all head.
//! - [`rejection`]: the CNN + SVM pipeline with a calibrated reject threshold.
//! - [`attacks`]: fast-gradient attacks against both systems, minimal-epsilon
//!   search and the Gaussian jamming baseline.
//! - [`analysis`]: cosine amplification profiles, the margin/gradient
//!   robustness statistic, accuracy evaluation and per-modulation tables.

pub mod analysis;
pub mod attacks;
pub mod codec;
pub mod dataset;
pub mod error;
pub mod nn;
pub mod rejection;
pub mod svm;

pub use error::{Error, FormatError, Result};

/// Number of modulation classes handled by every model in the crate.
pub const NUM_CLASSES: usize = 11;
