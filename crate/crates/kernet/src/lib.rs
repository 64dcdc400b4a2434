//! Layer-wise kernel networks trained with closed-form weights.
//!
//! Each layer projects its input with weights obtained in closed form —
//! per-class kernel mean embedding sums, or the dominant eigenvectors of a
//! spectral fixed point — and applies a frozen Gaussian random-feature map
//! as the activation. Layers are added greedily until the normalized HSIC
//! between the layer output and the labels crosses a threshold, at which
//! point same-class samples have collapsed toward shared points and
//! nearest-centroid classification is immediate.
//!
//! The crate ships the numeric core (kernels, HSIC statistics, spectral
//! solver, bandwidth search), dataset utilities, the greedy trainer, an
//! exact-kernel simulator for the monotone risk sequence, and a benchmark
//! harness with machine-readable reports. Hot loops are data-parallel via
//! rayon; build with `--no-default-features` for the sequential fallback.

pub mod data;
pub mod dump;
pub mod eigen;
pub mod error;
pub(crate) mod exec;
pub mod kernel;
pub mod network;
pub mod report;
pub mod rff;
pub mod seed;
pub mod serialize;
pub mod sigma;
pub mod simulate;
pub mod weights;

pub use error::{Error, Result};
