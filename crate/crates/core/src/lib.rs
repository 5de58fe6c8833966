//! Exact-score diffusion sampling and guidance diagnostics for Gaussian
//! mixture models.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar for common use.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod error;
pub mod harness;
pub mod mixture;
pub mod model_io;
pub mod rng;
pub mod sampler;
pub mod scalar;
pub mod schedule;
pub mod stats;

pub use error::{Error, Result};
pub use rng::{NoiseSource, RngStream, ScriptedNoise, ZeroNoise};
pub use sampler::{GuidanceMode, TrialRecord};
pub use scalar::Scalar;

pub type NoiseLevel = mixture::NoiseLevel<f64>;
pub type GaussianComponent = mixture::GaussianComponent<f64>;
pub type MixtureModel = mixture::MixtureModel<f64>;
pub type ClassConditionalModel = mixture::ClassConditionalModel<f64>;
pub type Schedule = schedule::Schedule<f64>;
pub type GuidanceSpec = sampler::GuidanceSpec<f64>;
pub type Trajectory = sampler::Trajectory<f64>;

pub type NoiseLevelF32 = mixture::NoiseLevel<f32>;
pub type MixtureModelF32 = mixture::MixtureModel<f32>;
pub type ClassConditionalModelF32 = mixture::ClassConditionalModel<f32>;
pub type ScheduleF32 = schedule::Schedule<f32>;
pub type GuidanceSpecF32 = sampler::GuidanceSpec<f32>;
