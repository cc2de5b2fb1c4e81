//! Bird-song classification: audio ingestion, spectral features, a fully
//! convolutional network with its training harness, and chunked detection.

pub mod audio;
pub mod dataset;
pub mod detect;
pub mod error;
pub mod features;
pub mod model;
pub mod nn;
pub mod report;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
