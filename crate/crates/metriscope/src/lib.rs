//! File formats, experiment pipelines and the command-line harness built on
//! `metriscope-core`.

pub mod config;
pub mod error;
pub mod femb;
pub mod heatmap;
pub mod imageset;
pub mod numfmt;
pub mod pipeline;
pub mod pgm;
pub mod report;

pub use error::{CliError, Result};
