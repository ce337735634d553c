use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Condition;
use crate::error::{Error, Result};
use crate::latent::VideoLatent;
use crate::Scalar;

/// Toy-world dimensions and prior parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub frames: usize,
    pub dim: usize,
    pub modes: usize,
    pub sigma_spatial: f64,
    pub sigma_temporal: f64,
    pub rho: f64,
    /// Standard deviation of the i.i.d. coordinates of each sharp mode mean.
    pub mean_amplitude: f64,
    pub blur_width: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            frames: 16,
            dim: 64,
            modes: 4,
            sigma_spatial: 0.1,
            sigma_temporal: 0.3,
            rho: 0.95,
            mean_amplitude: 1.0,
            blur_width: 3,
        }
    }
}

/// Circular moving average of odd `width` along a single frame.
pub fn blur<T: Scalar>(x: &[T], width: usize) -> Vec<T> {
    assert!(width % 2 == 1, "blur width must be odd");
    let n = x.len();
    let half = (width / 2) as isize;
    let w = T::lit(width as f64);
    (0..n as isize)
        .map(|i| {
            (-half..=half)
                .map(|o| x[(i + o).rem_euclid(n as isize) as usize])
                .sum::<T>()
                / w
        })
        .collect()
}

/// A clean-data prior whose posterior mean under the forward process is
/// available in closed form.
pub trait Prior<T: Scalar>: Send + Sync {
    fn modes(&self) -> usize;
    fn dim(&self) -> usize;
    fn frame_independent(&self) -> bool;

    /// `E[z0 | z_t]` when `z_t = sqrt(ab) z0 + sqrt(1 - ab) eps`.
    fn posterior_mean(&self, z_t: &VideoLatent<T>, alpha_bar: T, c: &Condition<T>) -> Result<VideoLatent<T>>;

    /// One clean draw with `frames` frames.
    fn draw(&self, frames: usize, c: &Condition<T>, rng: &mut ChaCha8Rng) -> Result<VideoLatent<T>>;
}

fn check_weights<T: Scalar>(weights: &[T], modes: usize) -> Result<()> {
    if weights.len() != modes || modes == 0 {
        return Err(Error::shape(modes, weights.len()));
    }
    let total: f64 = weights.iter().map(|w| w.as_f64()).sum();
    if weights.iter().any(|w| !(*w > T::zero())) || (total - 1.0).abs() > 1e-6 {
        return Err(Error::param("mixture weights must be positive and sum to 1"));
    }
    Ok(())
}

fn pick_mode<T: Scalar>(weights: &[T], c: &Condition<T>, rng: &mut ChaCha8Rng) -> usize {
    if let Some(k) = c.mode_id {
        return k;
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w.as_f64();
        if u < acc {
            return k;
        }
    }
    weights.len() - 1
}

/// Active components and their log prior weights under `c`.
fn active_modes<T: Scalar>(weights: &[T], c: &Condition<T>) -> Vec<(usize, T)> {
    match c.mode_id {
        Some(k) => vec![(k, T::zero())],
        None => weights.iter().enumerate().map(|(k, w)| (k, w.ln())).collect(),
    }
}

/// Normalizes log-weights in place with the max trick and returns them as
/// probabilities.
fn softmax_in_place<T: Scalar>(logits: &mut [T]) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        total += *l;
    }
    for l in logits.iter_mut() {
        *l /= total;
    }
}

/// Frame-wise mixture: each frame is drawn independently from
/// `sum_k w_k N(mu_k, sigma^2 I)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialWorld<T> {
    means: Vec<Vec<T>>,
    weights: Vec<T>,
    sigma: T,
}

impl<T: Scalar> SpatialWorld<T> {
    pub fn new(means: Vec<Vec<T>>, weights: Vec<T>, sigma: T) -> Result<Self> {
        check_weights(&weights, means.len())?;
        let dim = means[0].len();
        if dim == 0 || means.iter().any(|m| m.len() != dim) {
            return Err(Error::param("mode means must share a nonzero dimension"));
        }
        if !(sigma > T::zero()) {
            return Err(Error::param("sigma_spatial must be positive"));
        }
        Ok(Self { means, weights, sigma })
    }

    pub fn means(&self) -> &[Vec<T>] {
        &self.means
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    /// Log density of one frame under the (possibly mode-restricted) mixture.
    pub fn frame_log_density(&self, frame: &[T], c: &Condition<T>) -> Result<T> {
        c.check_mode(self.modes())?;
        if frame.len() != self.dim() {
            return Err(Error::shape(self.dim(), frame.len()));
        }
        let var = self.sigma * self.sigma;
        let norm = T::lit(-0.5 * self.dim() as f64) * (T::lit(2.0 * std::f64::consts::PI) * var).ln();
        let mut logits: Vec<T> = active_modes(&self.weights, c)
            .into_iter()
            .map(|(k, lw)| {
                let sq: T = frame.iter().zip(&self.means[k]).map(|(&x, &m)| (x - m) * (x - m)).sum();
                lw - sq / (T::lit(2.0) * var)
            })
            .collect();
        let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
        for l in logits.iter_mut() {
            *l = (*l - max).exp();
        }
        Ok(norm + max + logits.into_iter().sum::<T>().ln())
    }
}

impl<T: Scalar> Prior<T> for SpatialWorld<T> {
    fn modes(&self) -> usize {
        self.means.len()
    }

    fn dim(&self) -> usize {
        self.means[0].len()
    }

    fn frame_independent(&self) -> bool {
        true
    }

    fn posterior_mean(&self, z_t: &VideoLatent<T>, alpha_bar: T, c: &Condition<T>) -> Result<VideoLatent<T>> {
        c.check_mode(self.modes())?;
        if z_t.dim() != self.dim() {
            return Err(Error::shape(format!("dim {}", self.dim()), format!("dim {}", z_t.dim())));
        }
        let signal = alpha_bar.sqrt();
        let var = self.sigma * self.sigma;
        let marginal = alpha_bar * var + (T::one() - alpha_bar);
        let gain = signal * var / marginal;
        let active = active_modes(&self.weights, c);

        let mut out = VideoLatent::zeros(z_t.frames(), z_t.dim());
        let mut resp = vec![T::zero(); active.len()];
        for f in 0..z_t.frames() {
            let frame = z_t.frame(f);
            for (r, &(k, lw)) in resp.iter_mut().zip(&active) {
                let sq: T = frame
                    .iter()
                    .zip(&self.means[k])
                    .map(|(&z, &m)| (z - signal * m) * (z - signal * m))
                    .sum();
                *r = lw - sq / (T::lit(2.0) * marginal);
            }
            softmax_in_place(&mut resp);
            let dst = out.frame_mut(f);
            for (&r, &(k, _)) in resp.iter().zip(&active) {
                for ((d, &z), &m) in dst.iter_mut().zip(frame).zip(&self.means[k]) {
                    *d += r * (m + gain * (z - signal * m));
                }
            }
        }
        Ok(out)
    }

    fn draw(&self, frames: usize, c: &Condition<T>, rng: &mut ChaCha8Rng) -> Result<VideoLatent<T>> {
        c.check_mode(self.modes())?;
        let mut out = VideoLatent::zeros(frames, self.dim());
        for f in 0..frames {
            let k = pick_mode(&self.weights, c, rng);
            for (d, &m) in out.frame_mut(f).iter_mut().zip(&self.means[k]) {
                *d = m + self.sigma * T::lit(rng.sample::<f64, _>(StandardNormal));
            }
        }
        Ok(out)
    }
}

/// Whole-video mixture with AR(1) frame coupling: under mode `k`, every
/// coordinate track is `m_k[d] + sigma * x` with `x` a stationary AR(1)
/// sequence of correlation `rho` and unit variance.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalWorld<T> {
    means: Vec<Vec<T>>,
    weights: Vec<T>,
    sigma: T,
    rho: T,
    frames: usize,
    /// Eigenvectors of the frame correlation matrix, row-major `frames x frames`,
    /// column `j` is eigenvector `j`.
    eigvecs: Vec<T>,
    eigvals: Vec<T>,
}

impl<T: Scalar> TemporalWorld<T> {
    pub fn new(means: Vec<Vec<T>>, weights: Vec<T>, sigma: T, rho: T, frames: usize) -> Result<Self> {
        check_weights(&weights, means.len())?;
        let dim = means[0].len();
        if dim == 0 || means.iter().any(|m| m.len() != dim) {
            return Err(Error::param("mode means must share a nonzero dimension"));
        }
        if !(sigma > T::zero()) {
            return Err(Error::param("sigma_temporal must be positive"));
        }
        if !(rho >= T::zero() && rho < T::one()) {
            return Err(Error::param(format!("rho {rho} outside [0, 1)")));
        }
        if frames == 0 {
            return Err(Error::param("temporal world needs at least one frame"));
        }
        let r = rho.as_f64();
        let corr = DMatrix::from_fn(frames, frames, |i, j| r.powi((i as i32 - j as i32).abs()));
        let eig = SymmetricEigen::new(corr);
        if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::param("frame covariance is not positive definite"));
        }
        let mut eigvecs = vec![T::zero(); frames * frames];
        for i in 0..frames {
            for j in 0..frames {
                eigvecs[i * frames + j] = T::lit(eig.eigenvectors[(i, j)]);
            }
        }
        let eigvals = eig.eigenvalues.iter().map(|&l| T::lit(l)).collect();
        Ok(Self {
            means,
            weights,
            sigma,
            rho,
            frames,
            eigvecs,
            eigvals,
        })
    }

    pub fn means(&self) -> &[Vec<T>] {
        &self.means
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn rho(&self) -> T {
        self.rho
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    fn check_latent(&self, z: &VideoLatent<T>) -> Result<()> {
        if z.shape() != (self.frames, self.dim()) {
            return Err(Error::shape(
                format!("{}x{}", self.frames, self.dim()),
                format!("{}x{}", z.frames(), z.dim()),
            ));
        }
        Ok(())
    }
}

impl<T: Scalar> Prior<T> for TemporalWorld<T> {
    fn modes(&self) -> usize {
        self.means.len()
    }

    fn dim(&self) -> usize {
        self.means[0].len()
    }

    fn frame_independent(&self) -> bool {
        false
    }

    fn posterior_mean(&self, z_t: &VideoLatent<T>, alpha_bar: T, c: &Condition<T>) -> Result<VideoLatent<T>> {
        c.check_mode(self.modes())?;
        self.check_latent(z_t)?;
        let (nf, nd) = z_t.shape();
        let signal = alpha_bar.sqrt();
        let var = self.sigma * self.sigma;
        // Per eigen-direction marginal variance and posterior gain.
        let marginal: Vec<T> = self
            .eigvals
            .iter()
            .map(|&l| alpha_bar * var * l + (T::one() - alpha_bar))
            .collect();
        let gain: Vec<T> = self
            .eigvals
            .iter()
            .zip(&marginal)
            .map(|(&l, &m)| signal * var * l / m)
            .collect();

        let active = active_modes(&self.weights, c);
        // Eigen-coordinates of the centred latent for every active mode.
        let mut coords: Vec<Vec<T>> = Vec::with_capacity(active.len());
        let mut logits = Vec::with_capacity(active.len());
        for &(k, lw) in &active {
            let mut y = vec![T::zero(); nf * nd];
            let mut quad = T::zero();
            for j in 0..nf {
                for d in 0..nd {
                    let mut acc = T::zero();
                    for i in 0..nf {
                        acc += self.eigvecs[i * nf + j] * (z_t.get(i, d) - signal * self.means[k][d]);
                    }
                    y[j * nd + d] = acc;
                    quad += acc * acc / marginal[j];
                }
            }
            logits.push(lw - quad / T::lit(2.0));
            coords.push(y);
        }
        softmax_in_place(&mut logits);

        let mut out = VideoLatent::zeros(nf, nd);
        for ((&(k, _), y), &r) in active.iter().zip(&coords).zip(&logits) {
            for i in 0..nf {
                for d in 0..nd {
                    let mut acc = T::zero();
                    for j in 0..nf {
                        acc += self.eigvecs[i * nf + j] * gain[j] * y[j * nd + d];
                    }
                    let v = out.get(i, d) + r * (self.means[k][d] + acc);
                    out.set(i, d, v);
                }
            }
        }
        Ok(out)
    }

    fn draw(&self, frames: usize, c: &Condition<T>, rng: &mut ChaCha8Rng) -> Result<VideoLatent<T>> {
        c.check_mode(self.modes())?;
        if frames != self.frames {
            return Err(Error::shape(self.frames, frames));
        }
        let k = pick_mode(&self.weights, c, rng);
        let rho = self.rho.as_f64();
        let innov = (1.0 - rho * rho).sqrt();
        let nd = self.dim();
        let mut out = VideoLatent::zeros(frames, nd);
        let mut state = vec![0.0f64; nd];
        for f in 0..frames {
            for (d, s) in state.iter_mut().enumerate() {
                let xi: f64 = rng.sample(StandardNormal);
                *s = if f == 0 { xi } else { rho * *s + innov * xi };
                out.set(f, d, self.means[k][d] + self.sigma * T::lit(*s));
            }
        }
        Ok(out)
    }
}

/// Builds the paired lab worlds. Both share the same sharp mode means; the
/// temporal world sees them through a moving-average blur.
pub fn build_worlds<T: Scalar>(cfg: &WorldConfig, seed: u64) -> Result<(SpatialWorld<T>, TemporalWorld<T>)> {
    if cfg.modes == 0 || cfg.dim == 0 || cfg.frames == 0 {
        return Err(Error::param("world dimensions must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sharp: Vec<Vec<T>> = (0..cfg.modes)
        .map(|_| {
            (0..cfg.dim)
                .map(|_| T::lit(cfg.mean_amplitude * rng.sample::<f64, _>(StandardNormal)))
                .collect()
        })
        .collect();
    let blurred = sharp.iter().map(|m| blur(m, cfg.blur_width)).collect();
    let weights = vec![T::lit(1.0 / cfg.modes as f64); cfg.modes];
    let spatial = SpatialWorld::new(sharp, weights.clone(), T::lit(cfg.sigma_spatial))?;
    let temporal = TemporalWorld::new(
        blurred,
        weights,
        T::lit(cfg.sigma_temporal),
        T::lit(cfg.rho),
        cfg.frames,
    )?;
    Ok((spatial, temporal))
}

/// Draws one clean sample from `world`.
pub fn sample_world<T: Scalar, W: Prior<T> + ?Sized>(
    world: &W,
    frames: usize,
    c: &Condition<T>,
    seed: u64,
) -> Result<VideoLatent<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    world.draw(frames, c, &mut rng)
}

/// Temporal-world sample plus i.i.d. per-frame jitter of scale `flicker_sigma`.
pub fn make_degraded_video<T: Scalar>(
    world: &TemporalWorld<T>,
    c: &Condition<T>,
    flicker_sigma: f64,
    seed: u64,
) -> Result<VideoLatent<T>> {
    if !(flicker_sigma >= 0.0) {
        return Err(Error::param(format!("flicker_sigma {flicker_sigma} must be >= 0")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = world.draw(world.frames(), c, &mut rng)?;
    if flicker_sigma > 0.0 {
        for x in v.as_mut_slice() {
            *x += T::lit(flicker_sigma * rng.sample::<f64, _>(StandardNormal));
        }
    }
    Ok(v)
}
