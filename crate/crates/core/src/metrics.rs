//! Video scores on latent frames.
//!
//! All scores are computed in `f64` regardless of the latent scalar type.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::VideoLatent;
use crate::models::{Condition, SpatialWorld};
use crate::Scalar;

/// PSNR reported for (near-)identical inputs.
pub const PSNR_CAP: f64 = 99.0;

/// Mean over interior frames of the mean squared error between a frame and
/// the average of its two neighbours.
pub fn interpolation_error<T: Scalar>(v: &VideoLatent<T>) -> Result<f64> {
    let f = v.frames();
    if f < 3 {
        return Err(Error::param(format!("motion smoothness needs at least 3 frames, got {f}")));
    }
    let d = v.dim() as f64;
    let mut total = 0.0;
    for t in 1..f - 1 {
        let (a, b, c) = (v.frame(t - 1), v.frame(t), v.frame(t + 1));
        let e: f64 = (0..v.dim())
            .map(|j| {
                let r = b[j].as_f64() - 0.5 * (a[j].as_f64() + c[j].as_f64());
                r * r
            })
            .sum();
        total += e / d;
    }
    Ok(total / (f - 2) as f64)
}

/// `exp(-interpolation_error / tau)`.
pub fn motion_smoothness<T: Scalar>(v: &VideoLatent<T>, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::param(format!("tau {tau} must be positive")));
    }
    Ok((-interpolation_error(v)? / tau).exp())
}

fn centered(frame: &[f64]) -> Vec<f64> {
    let mean = frame.iter().sum::<f64>() / frame.len() as f64;
    frame.iter().map(|x| x - mean).collect()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let c = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb);
    c.clamp(-1.0, 1.0)
}

/// Average cosine similarity of each frame to the first frame and to its
/// predecessor, after removing each frame's mean.
pub fn subject_consistency<T: Scalar>(v: &VideoLatent<T>) -> Result<f64> {
    let f = v.frames();
    if f < 2 {
        return Err(Error::param(format!("subject consistency needs at least 2 frames, got {f}")));
    }
    let frames: Vec<Vec<f64>> = v
        .frames_iter()
        .map(|fr| centered(&fr.iter().map(|x| x.as_f64()).collect::<Vec<_>>()))
        .collect();
    let mut total = 0.0;
    for i in 1..f {
        total += cosine(&frames[0], &frames[i]) + cosine(&frames[i - 1], &frames[i]);
    }
    Ok(total / (2 * (f - 1)) as f64)
}

/// `(mean per-frame log-density - offset) / scale` under the sharp mixture.
pub fn imaging_quality<T: Scalar>(
    v: &VideoLatent<T>,
    world: &SpatialWorld<T>,
    c: &Condition<T>,
    offset: f64,
    scale: f64,
) -> Result<f64> {
    if !(scale > 0.0) {
        return Err(Error::param(format!("imaging-quality scale {scale} must be positive")));
    }
    let mut total = 0.0;
    for fr in v.frames_iter() {
        total += world.frame_log_density(fr, c)?.as_f64();
    }
    Ok((total / v.frames() as f64 - offset) / scale)
}

/// `10 log10(peak^2 / mse)`, capped at [`PSNR_CAP`].
pub fn psnr<T: Scalar>(a: &VideoLatent<T>, b: &VideoLatent<T>, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::param(format!("peak {peak} must be positive")));
    }
    let mse = a.mean_squared_error(b)?.as_f64();
    let peak2 = peak * peak;
    if mse < peak2 * 10f64.powf(-PSNR_CAP / 10.0) {
        return Ok(PSNR_CAP);
    }
    Ok(10.0 * (peak2 / mse).log10())
}

/// Closed interval a raw score is mapped from onto `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormRange {
    pub lo: f64,
    pub hi: f64,
}

impl NormRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        let r = Self { lo, hi };
        r.validate()?;
        Ok(r)
    }

    fn validate(&self) -> Result<()> {
        if !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::param(format!("normalization range [{}, {}] is empty", self.lo, self.hi)));
        }
        Ok(())
    }

    pub fn normalize(&self, x: f64) -> f64 {
        ((x - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }
}

/// Mean of the clamped normalized scores.
pub fn overall_score(parts: &[(f64, NormRange)]) -> Result<f64> {
    if parts.is_empty() {
        return Err(Error::param("overall score needs at least one metric"));
    }
    let mut total = 0.0;
    for (x, r) in parts {
        r.validate()?;
        total += r.normalize(*x);
    }
    Ok(total / parts.len() as f64)
}

/// Metric constants. Recorded in every manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub tau: f64,
    pub psnr_peak: f64,
    pub iq_offset: f64,
    pub iq_scale: f64,
    pub ms_range: NormRange,
    pub sc_range: NormRange,
    pub iq_range: NormRange,
    pub psnr_range: NormRange,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            tau: 2.0,
            psnr_peak: 1.0,
            iq_offset: 0.0,
            iq_scale: 64.0,
            ms_range: NormRange { lo: 0.9, hi: 1.0 },
            sc_range: NormRange { lo: 0.0, hi: 1.0 },
            iq_range: NormRange { lo: -40.0, hi: 1.5 },
            psnr_range: NormRange { lo: 0.0, hi: 25.0 },
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        for r in [&self.ms_range, &self.sc_range, &self.iq_range, &self.psnr_range] {
            r.validate()?;
        }
        if !(self.tau > 0.0 && self.psnr_peak > 0.0 && self.iq_scale > 0.0) {
            return Err(Error::param("tau, psnr_peak and iq_scale must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ms: f64,
    pub sc: f64,
    pub iq: f64,
    pub psnr: f64,
    pub overall: f64,
    pub nfe_total: usize,
    pub wall_time: f64,
}

/// Scores `v` against `reference` (for PSNR) and the sharp world (for iq).
pub fn score_video<T: Scalar>(
    v: &VideoLatent<T>,
    reference: &VideoLatent<T>,
    world: &SpatialWorld<T>,
    c: &Condition<T>,
    cfg: &MetricConfig,
) -> Result<MetricReport> {
    cfg.validate()?;
    let ms = motion_smoothness(v, cfg.tau)?;
    let sc = subject_consistency(v)?;
    let iq = imaging_quality(v, world, c, cfg.iq_offset, cfg.iq_scale)?;
    let p = psnr(v, reference, cfg.psnr_peak)?;
    let overall = overall_score(&[
        (ms, cfg.ms_range),
        (sc, cfg.sc_range),
        (iq, cfg.iq_range),
        (p, cfg.psnr_range),
    ])?;
    Ok(MetricReport {
        ms,
        sc,
        iq,
        psnr: p,
        overall,
        nfe_total: 0,
        wall_time: 0.0,
    })
}

/// The mode's sharp mean repeated on every frame.
pub fn sharp_reference<T: Scalar>(world: &SpatialWorld<T>, c: &Condition<T>, frames: usize) -> Result<VideoLatent<T>> {
    let k = c
        .mode_id
        .ok_or_else(|| Error::param("a sharp reference needs a mode"))?;
    let mean = world
        .means()
        .get(k)
        .ok_or_else(|| Error::param(format!("mode {k} out of range")))?;
    Ok(VideoLatent::tiled(mean, frames))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn video(frames: usize, dim: usize, f: impl Fn(usize, usize) -> f64) -> VideoLatent<f64> {
        let data = (0..frames * dim).map(|i| f(i / dim, i % dim)).collect();
        VideoLatent::from_vec(frames, dim, data).unwrap()
    }

    #[test]
    fn smoothness_exact_cases() {
        let constant = video(5, 3, |_, j| j as f64);
        assert_eq!(motion_smoothness(&constant, 0.05).unwrap(), 1.0);
        let linear = video(6, 4, |t, j| 0.5 * t as f64 - 0.25 * j as f64);
        assert!((motion_smoothness(&linear, 0.05).unwrap() - 1.0).abs() < 1e-15);
        // Alternating +-a: every interior residual is +-2a.
        let a = 0.3;
        let alt = video(7, 5, |t, _| if t % 2 == 0 { a } else { -a });
        let tau = 0.05;
        assert!((motion_smoothness(&alt, tau).unwrap() - (-4.0 * a * a / tau).exp()).abs() < 1e-15);
        assert!(motion_smoothness(&video(2, 3, |_, _| 0.0), tau).is_err());
        assert!(motion_smoothness(&alt, 0.0).is_err());
    }

    #[test]
    fn consistency_exact_cases() {
        let same = video(4, 5, |_, j| (j * j) as f64);
        assert!((subject_consistency(&same).unwrap() - 1.0).abs() < 1e-15);
        let anti = video(2, 3, |t, j| if t == 0 { j as f64 } else { -(j as f64) });
        assert!((subject_consistency(&anti).unwrap() + 1.0).abs() < 1e-15);
        let flat = video(3, 4, |_, _| 2.0);
        assert_eq!(subject_consistency(&flat).unwrap(), 0.0);
        assert!(subject_consistency(&video(1, 3, |_, _| 0.0)).is_err());
    }

    #[test]
    fn consistency_of_noise_is_near_zero() {
        // Null oracle: each centered cosine of independent D=64 Gaussian
        // frames has variance 1/(D-1). The 30 pairs are correlated through
        // shared frames; 1/sqrt(D-1) bounds the standard deviation of their mean.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sd = 1.0 / 63f64.sqrt();
        for _ in 0..20 {
            let v = VideoLatent::<f64>::gaussian(16, 64, &mut rng);
            assert!(subject_consistency(&v).unwrap().abs() < 3.0 * sd);
        }
    }

    #[test]
    fn psnr_cases() {
        let a = video(2, 5, |t, j| (t + j) as f64);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), PSNR_CAP);
        let b = a.map(|x| x + 1.0);
        assert!(psnr(&a, &b, 1.0).unwrap().abs() < 1e-12);
        let c = a.map(|x| x + 0.1);
        assert!((psnr(&a, &c, 1.0).unwrap() - 20.0).abs() < 1e-9);
        assert!(psnr(&a, &video(3, 5, |_, _| 0.0), 1.0).is_err());
        assert!(psnr(&a, &b, 0.0).is_err());
    }

    #[test]
    fn overall_cases() {
        let r = NormRange::new(0.0, 2.0).unwrap();
        assert_eq!(overall_score(&[(2.0, r); 4]).unwrap(), 1.0);
        assert_eq!(overall_score(&[(0.0, r); 4]).unwrap(), 0.0);
        assert_eq!(overall_score(&[(1.0, r), (1.0, r), (2.0, r), (5.0, r)]).unwrap(), 0.75);
        assert!(NormRange::new(1.0, 1.0).is_err());
        let bad = NormRange { lo: 3.0, hi: 1.0 };
        assert!(overall_score(&[(0.0, bad)]).is_err());
    }

    #[test]
    fn imaging_quality_at_mode_is_modal_density() {
        let w = SpatialWorld::new(vec![vec![1.0, 0.0, -1.0], vec![0.0, 2.0, 0.0]], vec![0.5, 0.5], 0.1).unwrap();
        let v = VideoLatent::tiled(&[1.0, 0.0, -1.0], 4);
        let modal = -1.5 * (2.0 * std::f64::consts::PI * 0.01).ln();
        let iq = imaging_quality(&v, &w, &Condition::mode(0), 0.0, 1.0).unwrap();
        assert!((iq - modal).abs() < 1e-12);
        let iq2 = imaging_quality(&v, &w, &Condition::mode(0), 1.0, 3.0).unwrap();
        assert!((iq2 - (modal - 1.0) / 3.0).abs() < 1e-12);
    }

    fn arb_video() -> impl Strategy<Value = VideoLatent<f64>> {
        (3usize..7, 2usize..6).prop_flat_map(|(f, d)| {
            prop::collection::vec(-3.0f64..3.0, f * d).prop_map(move |data| VideoLatent::from_vec(f, d, data).unwrap())
        })
    }

    proptest! {
        #[test]
        fn smoothness_shift_and_scale_covariance(v in arb_video(), shift in -5.0f64..5.0, s in 0.1f64..4.0, tau in 0.01f64..2.0) {
            let base = motion_smoothness(&v, tau).unwrap();
            let shifted = v.map(|x| x + shift);
            prop_assert!((motion_smoothness(&shifted, tau).unwrap() - base).abs() < 1e-9);
            let scaled = v.scaled(s);
            prop_assert!((motion_smoothness(&scaled, s * s * tau).unwrap() - base).abs() < 1e-9);
        }

        #[test]
        fn consistency_invariant_under_shared_rotation(v in arb_video(), angle in 0.0f64..6.28) {
            // Rotate coordinates 0 and 1 within the centered subspace: a
            // rotation fixing the all-ones vector keeps per-frame centering intact.
            let d = v.dim();
            let mut u = vec![0.0; d];
            let mut w = vec![0.0; d];
            u[0] = 1.0 / 2f64.sqrt();
            u[1] = -1.0 / 2f64.sqrt();
            if d >= 3 {
                let k = 1.0 / 6f64.sqrt();
                w[0] = k;
                w[1] = k;
                w[2] = -2.0 * k;
            } else {
                return Ok(());
            }
            let (c, s) = (angle.cos(), angle.sin());
            let mut out = v.clone();
            for t in 0..v.frames() {
                let fr = v.frame(t);
                let a: f64 = fr.iter().zip(&u).map(|(x, y)| x * y).sum();
                let b: f64 = fr.iter().zip(&w).map(|(x, y)| x * y).sum();
                let (ra, rb) = (c * a - s * b, s * a + c * b);
                let dst = out.frame_mut(t);
                for j in 0..d {
                    dst[j] += (ra - a) * u[j] + (rb - b) * w[j];
                }
            }
            let before = subject_consistency(&v).unwrap();
            prop_assert!((subject_consistency(&out).unwrap() - before).abs() < 1e-9);
        }

        #[test]
        fn psnr_symmetric_and_decreasing(v in arb_video(), e1 in 0.01f64..1.0, e2 in 0.01f64..1.0) {
            let a = v.map(|x| x + e1);
            prop_assert_eq!(psnr(&v, &a, 1.0).unwrap(), psnr(&a, &v, 1.0).unwrap());
            let b = v.map(|x| x + e1 + e2);
            prop_assert!(psnr(&v, &b, 1.0).unwrap() < psnr(&v, &a, 1.0).unwrap());
        }

        #[test]
        fn overall_monotone(xs in prop::collection::vec(-1.0f64..2.0, 4), i in 0usize..4, bump in 0.0f64..1.0) {
            let r = NormRange { lo: 0.0, hi: 1.0 };
            let parts: Vec<_> = xs.iter().map(|&x| (x, r)).collect();
            let mut up = parts.clone();
            up[i].0 += bump;
            prop_assert!(overall_score(&up).unwrap() >= overall_score(&parts).unwrap());
        }
    }
}
