//! SDEdit versus inversion with selective feature injection on styled
//! inputs that lie outside both worlds.

use evs_core::diffusion::sdedit_refine;
use evs_core::metrics::{motion_smoothness, psnr};
use evs_core::models::{sample_world, Condition};
use evs_core::sfi::{denoise_with_injection, invert_with_capture, InjectionConfig};
use evs_core::{AttentionNet, Latent, Timestep};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::derive_seed;
use crate::error::{BenchError, Result};
use crate::lab::{map_items, Lab};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sdedit,
    Sfi,
}

/// Suite-mean (MS, PSNR-to-input) of one refinement setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub method: Method,
    pub t: usize,
    pub layers: Option<String>,
    pub gamma: Option<f64>,
    pub ms: f64,
    pub psnr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierSummary {
    pub input_ms: f64,
    pub points: Vec<FrontierPoint>,
    pub grid_points: usize,
    /// Fraction of the shared MS grid on which the SFI frontier is at least
    /// the SDEdit frontier.
    pub dominance: f64,
}

/// Styled suite: spatial-world samples shifted by one fixed style vector.
pub fn styled_suite(lab: &Lab) -> Result<Vec<(Condition<f64>, Latent)>> {
    let fc = &lab.cfg.frontier;
    let (frames, dim) = (lab.cfg.world.frames, lab.cfg.world.dim);
    let mut rng = ChaCha8Rng::seed_from_u64(fc.style_seed);
    let style = Latent::gaussian(1, dim, &mut rng).scaled(fc.style_amplitude).into_vec();
    let shift = Latent::tiled(&style, frames);
    (0..fc.items)
        .map(|i| {
            let c = Condition::mode(i % lab.cfg.world.modes);
            let z = sample_world(&lab.sw, frames, &c, derive_seed(fc.style_seed, i as u64))?;
            Ok((c, z.add(&shift)?))
        })
        .collect()
}

/// Upper envelope: best PSNR among points with MS at least `m`.
pub fn envelope(points: &[(f64, f64)], m: f64) -> f64 {
    points
        .iter()
        .filter(|(ms, _)| *ms >= m)
        .map(|(_, p)| *p)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Fraction of `n` evenly spaced MS values over the overlap of both MS
/// ranges where `a`'s envelope is at least `b`'s.
pub fn dominance(a: &[(f64, f64)], b: &[(f64, f64)], n: usize) -> Result<f64> {
    if a.is_empty() || b.is_empty() || n < 2 {
        return Err(BenchError::Config("dominance needs two nonempty point sets and n >= 2".into()));
    }
    let range = |s: &[(f64, f64)]| {
        s.iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)))
    };
    let (a_lo, a_hi) = range(a);
    let (b_lo, b_hi) = range(b);
    let (lo, hi) = (a_lo.max(b_lo), a_hi.min(b_hi));
    if !(lo <= hi) {
        return Err(BenchError::Numeric(format!(
            "MS ranges [{a_lo}, {a_hi}] and [{b_lo}, {b_hi}] do not overlap"
        )));
    }
    let wins = (0..n)
        .filter(|&k| {
            let m = lo + (hi - lo) * k as f64 / (n - 1) as f64;
            envelope(a, m) >= envelope(b, m)
        })
        .count();
    Ok(wins as f64 / n as f64)
}

fn suite_mean(
    lab: &Lab,
    suite: &[(Condition<f64>, Latent)],
    f: impl Fn(usize, &Condition<f64>, &Latent) -> Result<Latent> + Sync + Send,
) -> Result<(f64, f64)> {
    let idx: Vec<usize> = (0..suite.len()).collect();
    let tau = lab.cfg.metrics.tau;
    let peak = lab.cfg.metrics.psnr_peak;
    let scores = map_items(&idx, lab.cfg.single_thread, |&i| {
        let (c, z) = &suite[i];
        let out = f(i, c, z)?;
        Ok((motion_smoothness(&out, tau)?, psnr(&out, z, peak)?))
    })?;
    let n = scores.len() as f64;
    Ok((
        scores.iter().map(|s| s.0).sum::<f64>() / n,
        scores.iter().map(|s| s.1).sum::<f64>() / n,
    ))
}

/// Sweeps every configured SDEdit timestep and SFI setting with `net`.
pub fn run_frontier(lab: &Lab, net: &AttentionNet) -> Result<FrontierSummary> {
    let fc = &lab.cfg.frontier;
    let sched = &lab.sched_v;
    let blocks = net.shape().blocks;
    let suite = styled_suite(lab)?;
    let (input_ms, _) = suite_mean(lab, &suite, |_, _, z| Ok(z.clone()))?;

    let mut points = Vec::new();
    for &t in &fc.sdedit_timesteps {
        let (ms, p) = suite_mean(lab, &suite, |i, c, z| {
            if t == 0 {
                return Ok(z.clone());
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(lab.cfg.seed, i as u64));
            Ok(sdedit_refine(z, Timestep(t), Timestep(0), net, c, sched, &mut rng)?.partial_latent)
        })?;
        points.push(FrontierPoint {
            method: Method::Sdedit,
            t,
            layers: None,
            gamma: None,
            ms,
            psnr: p,
        });
    }
    for &t in &fc.sfi_timesteps {
        for &set in &fc.layer_sets {
            for &gamma in &fc.gammas {
                let inj = InjectionConfig::new(set.layers(blocks), gamma, fc.f_layer_sets.contains(&set), true)?;
                let (ms, p) = suite_mean(lab, &suite, |_, c, z| {
                    let (zt, cache, _) = invert_with_capture(z, Timestep(t), net, c, sched)?;
                    Ok(denoise_with_injection(&zt, Timestep(t), t, net, c, sched, &cache, &inj)?.partial_latent)
                })?;
                points.push(FrontierPoint {
                    method: Method::Sfi,
                    t,
                    layers: Some(set.name().to_string()),
                    gamma: Some(gamma),
                    ms,
                    psnr: p,
                });
            }
        }
    }
    let pick = |m: Method| -> Vec<(f64, f64)> {
        points
            .iter()
            .filter(|p| p.method == m)
            .map(|p| (p.ms, p.psnr))
            .collect()
    };
    let dominance = dominance(&pick(Method::Sfi), &pick(Method::Sdedit), fc.grid_points)?;
    Ok(FrontierSummary {
        input_ms,
        points,
        grid_points: fc.grid_points,
        dominance,
    })
}
