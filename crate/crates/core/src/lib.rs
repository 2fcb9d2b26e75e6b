//! Multi-source unsupervised domain adaptation for sentiment classification.
//!
//! A shared-private model is trained adversarially against a (K+1)-way
//! domain discriminator. At inference the discriminator doubles as an
//! estimator of how strongly each target instance relates to each source,
//! and those weights combine the K source classifiers. A second stage can
//! train a target-specific extractor on confidence-filtered pseudo-labels.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the 64-bit precision used by the trainers and the CLI.

pub mod data;
pub mod error;
pub mod experiment;
pub mod model;
pub mod numeric;
pub mod scalar;
pub mod training;
pub mod weighting;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = numeric::Matrix<f64>;
pub type Matrix32 = numeric::Matrix<f32>;
pub type Model = model::SharedPrivateModel<f64>;
pub type Model32 = model::SharedPrivateModel<f32>;
pub type Affine = numeric::Affine<f64>;
pub type Adam = numeric::Adam<f64>;
pub type WeightVector = weighting::WeightVector<f64>;
pub type TargetPrediction = weighting::TargetPrediction<f64>;
