use super::{reject_hooks, Condition, Denoiser, EvalCounter, Hooks, Prior};
use crate::error::{Error, Result};
use crate::latent::VideoLatent;
use crate::schedule::{NoiseSchedule, Timestep};
use crate::Scalar;

/// Bayes-optimal noise prediction
/// `eps* = (z_t - sqrt(ab_t) E[z0 | z_t]) / sqrt(1 - ab_t)`.
pub fn gmm_posterior_eps<T: Scalar, W: Prior<T> + ?Sized>(
    z_t: &VideoLatent<T>,
    t: Timestep,
    world: &W,
    c: &Condition<T>,
    sched: &NoiseSchedule<T>,
) -> Result<VideoLatent<T>> {
    sched.check(t)?;
    if t.0 == 0 {
        return Err(Error::param("noise prediction is undefined at t=0"));
    }
    let ab = sched.alpha_bar(t);
    let (signal, noise) = sched.coefficients(t);
    let mean = world.posterior_mean(z_t, ab, c)?;
    let eps = z_t.lincomb(T::one() / noise, &mean, -signal / noise)?;
    if !eps.is_finite() {
        return Err(Error::Numeric(format!("posterior noise prediction at {t}")));
    }
    Ok(eps)
}

/// Denoiser that evaluates [`gmm_posterior_eps`] for a fixed world and schedule.
#[derive(Clone, Debug)]
pub struct AnalyticDenoiser<T, W> {
    name: String,
    world: W,
    sched: NoiseSchedule<T>,
    counter: EvalCounter,
}

impl<T: Scalar, W: Prior<T>> AnalyticDenoiser<T, W> {
    pub fn new(name: impl Into<String>, world: W, sched: NoiseSchedule<T>) -> Self {
        Self {
            name: name.into(),
            world,
            sched,
            counter: EvalCounter::default(),
        }
    }

    pub fn world(&self) -> &W {
        &self.world
    }

    pub fn schedule(&self) -> &NoiseSchedule<T> {
        &self.sched
    }
}

impl<T: Scalar, W: Prior<T>> Denoiser<T> for AnalyticDenoiser<T, W> {
    fn name(&self) -> &str {
        &self.name
    }

    fn frame_independent(&self) -> bool {
        self.world.frame_independent()
    }

    fn evaluations(&self) -> u64 {
        self.counter.get()
    }

    fn evaluate_hooked(
        &self,
        z_t: &VideoLatent<T>,
        t: Timestep,
        c: &Condition<T>,
        hooks: &mut Hooks<'_, T>,
    ) -> Result<VideoLatent<T>> {
        reject_hooks(&self.name, hooks)?;
        self.counter.bump();
        gmm_posterior_eps(z_t, t, &self.world, c, &self.sched)
    }
}
