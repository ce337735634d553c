//! Deterministic DDIM sampling and inversion, and SDEdit refinement.
//!
//! All loops use the stride-one grid of the schedule they run on, with
//! `eta = 0`. A step at timestep `t` always evaluates the model at `t`; the
//! inversion step that lands on `t` also evaluates at `t`, which keeps feature
//! caches keyed by the same timesteps the denoising loop later visits.

use rand::Rng;

use crate::error::{Error, Result};
use crate::latent::VideoLatent;
use crate::models::{Condition, Denoiser, Hooks};
use crate::schedule::{forward_noise, NoiseSchedule, Timestep};
use crate::sfi::FeatureCache;
use crate::Scalar;

/// Latent reached by a partial denoising run together with the clean
/// prediction of its last step.
#[derive(Clone, Debug, PartialEq)]
pub struct RefineOutput<T> {
    /// `z_{t_end}`.
    pub partial_latent: VideoLatent<T>,
    /// Clean prediction of the final executed step.
    pub predicted_clean: VideoLatent<T>,
    pub nfe: usize,
}

/// `(z_t - sqrt(1 - ab_t) eps_hat) / sqrt(ab_t)`.
pub fn predict_clean<T: Scalar>(
    z_t: &VideoLatent<T>,
    t: Timestep,
    eps_hat: &VideoLatent<T>,
    sched: &NoiseSchedule<T>,
) -> Result<VideoLatent<T>> {
    sched.check(t)?;
    if t.0 == 0 {
        return Err(Error::param("nothing to predict at t=0"));
    }
    clean_estimate(z_t, t, eps_hat, sched)
}

/// Same as [`predict_clean`] but defined at `t = 0`, where it is the identity.
fn clean_estimate<T: Scalar>(
    z_t: &VideoLatent<T>,
    t: Timestep,
    eps_hat: &VideoLatent<T>,
    sched: &NoiseSchedule<T>,
) -> Result<VideoLatent<T>> {
    if t.0 == 0 {
        z_t.ensure_same_shape(eps_hat)?;
        return Ok(z_t.clone());
    }
    let (signal, noise) = sched.coefficients(t);
    z_t.lincomb(T::one() / signal, eps_hat, -noise / signal)
}

fn checked_eval<T: Scalar>(
    model: &dyn Denoiser<T>,
    z_t: &VideoLatent<T>,
    t: Timestep,
    c: &Condition<T>,
    hooks: &mut Hooks<'_, T>,
) -> Result<VideoLatent<T>> {
    let eps = model.evaluate_hooked(z_t, t, c, hooks)?;
    z_t.ensure_same_shape(&eps)?;
    if !eps.is_finite() {
        return Err(Error::Numeric(format!("{} at {t}", model.name())));
    }
    Ok(eps)
}

/// One deterministic DDIM update from `t` to `t_prev`; returns
/// `(z_{t_prev}, z_{t->0})` after exactly one model evaluation.
pub fn ddim_step<T: Scalar>(
    z_t: &VideoLatent<T>,
    t: Timestep,
    t_prev: Timestep,
    model: &dyn Denoiser<T>,
    c: &Condition<T>,
    sched: &NoiseSchedule<T>,
) -> Result<(VideoLatent<T>, VideoLatent<T>)> {
    ddim_step_hooked(z_t, t, t_prev, model, c, sched, &mut Hooks::none())
}

pub fn ddim_step_hooked<T: Scalar>(
    z_t: &VideoLatent<T>,
    t: Timestep,
    t_prev: Timestep,
    model: &dyn Denoiser<T>,
    c: &Condition<T>,
    sched: &NoiseSchedule<T>,
    hooks: &mut Hooks<'_, T>,
) -> Result<(VideoLatent<T>, VideoLatent<T>)> {
    sched.check(t)?;
    if t_prev >= t {
        return Err(Error::param(format!("DDIM step needs t_prev < t (got {t_prev} -> {t})")));
    }
    let eps = checked_eval(model, z_t, t, c, hooks)?;
    let clean = clean_estimate(z_t, t, &eps, sched)?;
    let prev = if t_prev.0 == 0 {
        clean.clone()
    } else {
        let (signal, noise) = sched.coefficients(t_prev);
        clean.lincomb(signal, &eps, noise)?
    };
    Ok((prev, clean))
}

/// Runs DDIM from `t_from` down to `t_to` on consecutive timesteps.
pub fn ddim_sample<T: Scalar>(
    z_from: &VideoLatent<T>,
    t_from: Timestep,
    t_to: Timestep,
    model: &dyn Denoiser<T>,
    c: &Condition<T>,
    sched: &NoiseSchedule<T>,
) -> Result<RefineOutput<T>> {
    ddim_sample_with(z_from, t_from, t_to, model, c, sched, &mut Hooks::none(), None)
}

/// [`ddim_sample`] with feature hooks applied to every step and an optional
/// trace that receives the latent after each step.
#[allow(clippy::too_many_arguments)]
pub fn ddim_sample_with<T: Scalar>(
    z_from: &VideoLatent<T>,
    t_from: Timestep,
    t_to: Timestep,
    model: &dyn Denoiser<T>,
    c: &Condition<T>,
    sched: &NoiseSchedule<T>,
    hooks: &mut Hooks<'_, T>,
    mut trace: Option<&mut Vec<VideoLatent<T>>>,
) -> Result<RefineOutput<T>> {
    sched.check(t_from)?;
    if t_to >= t_from {
        return Err(Error::param(format!("sampling needs t_to < t_from (got {t_to}, {t_from})")));
    }
    let mut z = z_from.clone();
    let mut clean = None;
    for t in (t_to.0 + 1..=t_from.0).rev() {
        let (prev, c0) = ddim_step_hooked(&z, Timestep(t), Timestep(t - 1), model, c, sched, &mut hooks.reborrow())?;
        z = prev;
        clean = Some(c0);
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(z.clone());
        }
    }
    Ok(RefineOutput {
        partial_latent: z,
        predicted_clean: clean.expect("at least one step"),
        nfe: t_from.0 - t_to.0,
    })
}

/// Deterministic DDIM inversion of a clean latent up to `t_target`.
///
/// Each step `t -> t+1` evaluates the model once at `(z_t, t+1)`. When a
/// capture cache is supplied, every tapped feature is recorded under the
/// evaluated timestep.
pub fn ddim_invert<T: Scalar>(
    z0: &VideoLatent<T>,
    t_target: Timestep,
    model: &dyn Denoiser<T>,
    c: &Condition<T>,
    sched: &NoiseSchedule<T>,
    mut capture: Option<&mut FeatureCache<T>>,
) -> Result<(VideoLatent<T>, usize)> {
    sched.check(t_target)?;
    if t_target.0 == 0 {
        return Err(Error::param("inversion target must be >= 1"));
    }
    if capture.is_some() && !model.has_taps() {
        return Err(Error::Capability(format!("{} cannot capture features", model.name())));
    }
    let mut z = z0.clone();
    for t in 0..t_target.0 {
        let next = Timestep(t + 1);
        let mut hooks = Hooks {
            capture: capture.as_deref_mut(),
            inject: None,
        };
        let eps = checked_eval(model, &z, next, c, &mut hooks)?;
        let clean = clean_estimate(&z, Timestep(t), &eps, sched)?;
        let (signal, noise) = sched.coefficients(next);
        z = clean.lincomb(signal, &eps, noise)?;
    }
    Ok((z, t_target.0))
}

/// SDEdit: noise `z0` to `t_noise` with a fresh Gaussian draw, then run DDIM
/// down to `t_end`.
#[allow(clippy::too_many_arguments)]
pub fn sdedit_refine<T: Scalar, R: Rng + ?Sized>(
    z0: &VideoLatent<T>,
    t_noise: Timestep,
    t_end: Timestep,
    model: &dyn Denoiser<T>,
    c: &Condition<T>,
    sched: &NoiseSchedule<T>,
    rng: &mut R,
) -> Result<RefineOutput<T>> {
    sched.check(t_noise)?;
    if t_noise.0 == 0 || t_end >= t_noise {
        return Err(Error::param(format!("SDEdit needs t_end < t_noise with t_noise >= 1 (got {t_end}, {t_noise})")));
    }
    let eps = VideoLatent::gaussian(z0.frames(), z0.dim(), rng);
    let z_t = forward_noise(z0, t_noise, &eps, sched)?;
    ddim_sample(&z_t, t_noise, t_end, model, c, sched)
}
