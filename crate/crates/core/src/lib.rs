//! Metric suite, phantom generator and perturbation engine for stress-testing
//! no-reference image quality metrics on generative medical imaging.
//!
//! The crate is `no_std` (it needs `alloc`) and purely computational: every
//! operation is a deterministic function of its inputs and an [`RngStream`].
//! File formats, the CLI and parallel scheduling live in the `metriscope`
//! companion crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

// Modules import `num_traits::Float` with `allow(unused_imports)`: when a
// dependency links std, its inherent float methods take precedence.

pub mod analysis;
pub mod dataset;
mod error;
pub mod featstore;
pub mod features;
pub mod linalg;
pub mod metrics;
pub mod perturb;
pub mod phantom;
pub mod rng;
pub(crate) mod stats;

pub use dataset::{normalize_intensity, partition_dataset, ImageSet, ImageVolume};
pub use error::{Error, Result};
pub use features::{ClassProbMatrix, FeatureMatrix};
pub use rng::RngStream;
