pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod interventions;
pub mod model;
pub mod numkernel;
pub mod polyomino;
pub mod scalar;
pub mod seeds;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Single-precision model, the default for training and evaluation.
pub type Model = model::LatentModel<f32>;
/// Double-precision model, used for gradient checks.
pub type Model64 = model::LatentModel<f64>;
pub type Sample = training::EncodedSample<f32>;
pub type Sample64 = training::EncodedSample<f64>;
