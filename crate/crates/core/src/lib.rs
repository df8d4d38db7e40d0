//! Spatiotemporal demand forecasting on a city grid.
//!
//! Demand counts are binned into an `I × J × T` cube, turned into stacked
//! recent/periodic volumes, and fed through 3D convolutions, 2D convolutions
//! and locally connected output layers. The crate also carries the baseline
//! models, the period-selection decomposition, and the evaluation suite.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`, which is what training and evaluation use.

pub mod data;
pub mod error;
pub mod evalstats;
pub mod forecast;
pub mod models;
pub mod nn;
pub mod scalar;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = tensor::Tensor<f64>;
pub type Tensor32 = tensor::Tensor<f32>;
pub type Model64 = models::ModelGraph<f64>;
pub type Sample64 = data::VolumeSample<f64>;
pub type RegionModel64 = models::RegionModel<f64>;
