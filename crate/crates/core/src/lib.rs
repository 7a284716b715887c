pub mod convnet;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod mid;
pub mod mtt_sim;
pub mod raster;
pub mod rng;

pub use error::{Error, Result};
