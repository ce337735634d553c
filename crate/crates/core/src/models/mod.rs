//! Noise-prediction models and the toy data worlds they are defined on.
//!
//! Two analytic denoisers stand in for the image and video backbones: the
//! spatial one treats frames independently under a sharp per-frame Gaussian
//! mixture, the temporal one couples frames through an AR(1) covariance but
//! has blurred means. A small attention network supplies the layered
//! features needed for feature capture and injection.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::latent::VideoLatent;
use crate::schedule::Timestep;
use crate::sfi::{FeatureCache, InjectionConfig};
use crate::Scalar;

mod analytic;
mod attention;
mod train;
mod world;

pub use analytic::{gmm_posterior_eps, AnalyticDenoiser};
pub use attention::{AttentionShape, ToyAttentionDenoiser};
pub use train::{train_toy_denoiser, TrainRecipe, TrainReport};
pub use world::{
    blur, build_worlds, make_degraded_video, sample_world, Prior, SpatialWorld, TemporalWorld, WorldConfig,
};

/// Conditioning signal `c`.
///
/// `mode_id` selects a mixture component of the toy worlds; `None` leaves the
/// full mixture in play. `style` is an optional per-frame offset used to
/// build out-of-distribution inputs; denoisers do not read it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Condition<T> {
    pub mode_id: Option<usize>,
    pub style: Option<Vec<T>>,
}

impl<T> Condition<T> {
    pub fn mode(mode_id: usize) -> Self {
        Self {
            mode_id: Some(mode_id),
            style: None,
        }
    }

    pub fn unconditional() -> Self {
        Self {
            mode_id: None,
            style: None,
        }
    }

    pub fn with_style(mut self, style: Vec<T>) -> Self {
        self.style = Some(style);
        self
    }

    pub(crate) fn check_mode(&self, modes: usize) -> Result<()> {
        match self.mode_id {
            Some(k) if k >= modes => Err(Error::param(format!("mode_id {k} but world has {modes} modes"))),
            _ => Ok(()),
        }
    }
}

/// Optional instrumentation for a single model evaluation.
#[derive(Default)]
pub struct Hooks<'a, T> {
    /// Receives every tapped feature of this evaluation.
    pub capture: Option<&'a mut FeatureCache<T>>,
    /// Replaces features at the configured layers.
    pub inject: Option<(&'a FeatureCache<T>, &'a InjectionConfig)>,
}

impl<'a, T> Hooks<'a, T> {
    pub fn none() -> Self {
        Self {
            capture: None,
            inject: None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.capture.is_none() && self.inject.is_none()
    }

    /// Reborrows for a single evaluation.
    pub fn reborrow(&mut self) -> Hooks<'_, T> {
        Hooks {
            capture: self.capture.as_deref_mut(),
            inject: self.inject,
        }
    }
}

/// Noise-prediction model `eps_theta(z_t, t, c)`.
pub trait Denoiser<T: Scalar>: Send + Sync {
    fn name(&self) -> &str;

    /// True when frames are denoised independently of each other.
    fn frame_independent(&self) -> bool;

    /// True when the model exposes layer features for capture and injection.
    fn has_taps(&self) -> bool {
        false
    }

    /// Number of evaluations performed so far.
    fn evaluations(&self) -> u64;

    /// Evaluates with optional feature hooks. Models without taps reject
    /// non-empty hooks with [`Error::Capability`].
    fn evaluate_hooked(
        &self,
        z_t: &VideoLatent<T>,
        t: Timestep,
        c: &Condition<T>,
        hooks: &mut Hooks<'_, T>,
    ) -> Result<VideoLatent<T>>;

    fn evaluate(&self, z_t: &VideoLatent<T>, t: Timestep, c: &Condition<T>) -> Result<VideoLatent<T>> {
        self.evaluate_hooked(z_t, t, c, &mut Hooks::none())
    }
}

/// Linearizable evaluation counter.
#[derive(Debug, Default)]
pub struct EvalCounter(AtomicU64);

impl EvalCounter {
    #[inline]
    pub fn bump(&self) {
        self.0.fetch_add(1, Ordering::SeqCst);
    }

    #[inline]
    pub fn get(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

impl Clone for EvalCounter {
    fn clone(&self) -> Self {
        Self(AtomicU64::new(self.get()))
    }
}

pub(crate) fn reject_hooks<T>(model: &str, hooks: &Hooks<'_, T>) -> Result<()> {
    if hooks.is_empty() {
        Ok(())
    } else {
        Err(Error::Capability(format!("{model} has no feature taps")))
    }
}
