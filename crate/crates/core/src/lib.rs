//! Fairness repair for small dense classifiers on tabular data.
//!
//! The pipeline profiles a trained network, extracts one activation path per
//! training sample by backward contribution tracing, groups samples by path,
//! marks samples on rare paths as biased, and retrains with dropout enabled
//! only on those samples. Group fairness is measured with demographic parity,
//! demographic parity ratio and equal opportunity.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the common choices.

pub mod baselines;
pub mod clustering;
pub mod data;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod nn;
pub mod repair;
pub mod scalar;
pub mod slicing;
pub mod tuning;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Network64 = nn::Network<f64>;
pub type Network32 = nn::Network<f32>;
pub type Dataset64 = data::EncodedDataset<f64>;
pub type Dataset32 = data::EncodedDataset<f32>;
pub type Split64 = data::SplitDataset<f64>;
pub type Split32 = data::SplitDataset<f32>;
pub type Profile64 = slicing::ActivationProfile<f64>;
pub type Profile32 = slicing::ActivationProfile<f32>;
