//! Binary hyperdimensional transformer for multivariate time series, plus a
//! lab for measuring the information loss of binarization.

pub mod attention;
pub mod classifier;
pub mod config;
pub mod dataset;
pub mod distortion;
pub mod encoder;
pub mod error;
pub mod harness;
pub mod hv;
pub mod item_memory;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
pub use hv::{AccumVector, BitCounter, Hypervector};
pub use model::{model_size_kb, Model};
pub use rng::RngStream;
