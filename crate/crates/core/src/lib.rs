//! Toy-latent laboratory for composing a frame-wise image diffusion model
//! with a temporal video diffusion model.
//!
//! Everything is generic over the scalar type; [`Latent`], [`Schedule`] and
//! friends fix it to `f64`.

mod error;
mod latent;
mod scalar;

pub mod compose;
pub mod diffusion;
pub mod io;
pub mod metrics;
pub mod models;
pub mod schedule;
pub mod sfi;

pub use error::{Error, Result};
pub use latent::VideoLatent;
pub use scalar::Scalar;
pub use compose::{BlockMode, Models, PipelineConfig, PipelineResult};
pub use metrics::{MetricConfig, MetricReport};
pub use schedule::{build_linear_beta, forward_noise, NoiseSchedule, Timestep};

pub type Latent = VideoLatent<f64>;
pub type Schedule = NoiseSchedule<f64>;
pub type Cache = sfi::FeatureCache<f64>;
pub type Spatial = models::SpatialWorld<f64>;
pub type Temporal = models::TemporalWorld<f64>;
pub type AttentionNet = models::ToyAttentionDenoiser<f64>;
