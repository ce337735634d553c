//! Noise schedules and the closed-form forward process.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::VideoLatent;
use crate::Scalar;

/// Integer diffusion timestep on some schedule; `0` is the clean level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestep(pub usize);

impl Timestep {
    #[inline]
    pub fn get(self) -> usize {
        self.0
    }
}

impl fmt::Display for Timestep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={}", self.0)
    }
}

impl From<usize> for Timestep {
    fn from(t: usize) -> Self {
        Timestep(t)
    }
}

/// Cumulative signal-retention coefficients `alpha_bar[0..=T]`.
///
/// `alpha_bar[0]` is exactly one, so timestep zero is the identity noising
/// level. The sequence is strictly decreasing and stays in `(0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule<T> {
    alpha_bar: Vec<T>,
}

impl<T: Scalar> NoiseSchedule<T> {
    /// Validates and wraps an explicit `alpha_bar` table.
    pub fn from_alpha_bar(alpha_bar: Vec<T>) -> Result<Self> {
        if alpha_bar.len() < 2 {
            return Err(Error::param("schedule needs at least one noising step"));
        }
        if alpha_bar[0] != T::one() {
            return Err(Error::param("alpha_bar[0] must be exactly 1"));
        }
        for (t, w) in alpha_bar.windows(2).enumerate() {
            if !(w[1] < w[0]) || !(w[1] > T::zero()) {
                return Err(Error::param(format!(
                    "alpha_bar must be strictly decreasing and positive (violated at t={})",
                    t + 1
                )));
            }
        }
        Ok(Self { alpha_bar })
    }

    /// Total number of noising steps `T`.
    #[inline]
    pub fn total_steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    #[inline]
    pub fn alpha_bar(&self, t: Timestep) -> T {
        self.alpha_bar[t.0]
    }

    pub fn alpha_bars(&self) -> &[T] {
        &self.alpha_bar
    }

    /// `(sqrt(alpha_bar_t), sqrt(1 - alpha_bar_t))`.
    #[inline]
    pub fn coefficients(&self, t: Timestep) -> (T, T) {
        let a = self.alpha_bar[t.0];
        (a.sqrt(), (T::one() - a).sqrt())
    }

    pub fn check(&self, t: Timestep) -> Result<()> {
        if t.0 > self.total_steps() {
            return Err(Error::param(format!(
                "{t} outside schedule range [0, {}]",
                self.total_steps()
            )));
        }
        Ok(())
    }

    /// Maps a strength in `[0, 1]` to `round(s * T)`, rounding halves up.
    pub fn strength_to_timestep(&self, strength: f64) -> Result<Timestep> {
        if !(0.0..=1.0).contains(&strength) {
            return Err(Error::param(format!("strength {strength} outside [0, 1]")));
        }
        let t = (strength * self.total_steps() as f64 + 0.5).floor() as usize;
        Ok(Timestep(t.min(self.total_steps())))
    }

    pub fn cast<U: Scalar>(&self) -> NoiseSchedule<U> {
        let mut alpha_bar: Vec<U> = self.alpha_bar.iter().map(|&a| U::lit(a.as_f64())).collect();
        alpha_bar[0] = U::one();
        NoiseSchedule { alpha_bar }
    }
}

/// Linear-beta (DDPM-style) schedule: `alpha_bar[t] = prod_{i<=t} (1 - beta_i)`
/// with `beta_1..beta_T` evenly spaced from `beta_start` to `beta_end`.
pub fn build_linear_beta<T: Scalar>(total_steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule<T>> {
    if total_steps == 0 {
        return Err(Error::param("schedule needs T >= 1"));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::param(format!(
            "beta range [{beta_start}, {beta_end}] must satisfy 0 < start <= end < 1"
        )));
    }
    let mut alpha_bar = Vec::with_capacity(total_steps + 1);
    alpha_bar.push(T::one());
    let mut prod = 1.0f64;
    for i in 0..total_steps {
        let beta = if total_steps == 1 {
            beta_start
        } else {
            beta_start + (beta_end - beta_start) * i as f64 / (total_steps - 1) as f64
        };
        prod *= 1.0 - beta;
        alpha_bar.push(T::lit(prod));
    }
    NoiseSchedule::from_alpha_bar(alpha_bar)
}

/// `sqrt(alpha_bar_t) * z0 + sqrt(1 - alpha_bar_t) * eps`.
pub fn forward_noise<T: Scalar>(
    z0: &VideoLatent<T>,
    t: Timestep,
    eps: &VideoLatent<T>,
    sched: &NoiseSchedule<T>,
) -> Result<VideoLatent<T>> {
    sched.check(t)?;
    if t.0 == 0 {
        z0.ensure_same_shape(eps)?;
        return Ok(z0.clone());
    }
    let (signal, noise) = sched.coefficients(t);
    z0.lincomb(signal, eps, noise)
}
