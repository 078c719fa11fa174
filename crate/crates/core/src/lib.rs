//! Runtime detection of silent data corruption in small CNN classifiers.
//!
//! The crate monitors convolution outputs with per-layer quantile markers,
//! injects input and memory faults to build labeled outcome datasets,
//! trains a decision-tree detector on the anomaly features, and shrinks
//! the marker set the detector needs. An experiment harness ties the
//! pieces together: synthetic image data, network training, fault
//! campaigns, reseeded evaluation, and deterministic report files.

pub mod corruption;
pub mod detector;
pub mod error;
pub mod harness;
pub mod monitor;
pub mod net;
pub mod reduction;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor4;
