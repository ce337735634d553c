//! Selective feature injection.
//!
//! Features are captured while inverting a clean latent with the temporal
//! model and replayed while denoising it again. Injected keys and values
//! carry the imaging content of the inverted latent; the query is blended
//! between its cached and live values by `gamma`, which is how much of the
//! model's own temporal mixing is allowed back in.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::diffusion::{ddim_invert, ddim_sample_with, RefineOutput};
use crate::error::{Error, Result};
use crate::latent::VideoLatent;
use crate::models::{Condition, Denoiser, Hooks};
use crate::schedule::{NoiseSchedule, Timestep};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureKind {
    /// Output of the block's feature branch.
    F,
    Q,
    K,
    V,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 4] = [FeatureKind::F, FeatureKind::Q, FeatureKind::K, FeatureKind::V];

    pub fn code(self) -> u32 {
        match self {
            FeatureKind::F => 0,
            FeatureKind::Q => 1,
            FeatureKind::K => 2,
            FeatureKind::V => 3,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureKind::F => "f",
            FeatureKind::Q => "Q",
            FeatureKind::K => "K",
            FeatureKind::V => "V",
        })
    }
}

/// Cache key: schedule timestep, zero-based layer index, feature kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FeatureKey {
    pub timestep: usize,
    pub layer: usize,
    pub kind: FeatureKind,
}

impl FeatureKey {
    pub fn new(timestep: usize, layer: usize, kind: FeatureKind) -> Self {
        Self { timestep, layer, kind }
    }
}

/// Write-once store of captured features.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureCache<T> {
    entries: BTreeMap<FeatureKey, Vec<T>>,
}

impl<T: Scalar> FeatureCache<T> {
    pub fn new() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    /// Stores a feature. A key may only be written once and arrays must be finite.
    pub fn insert(&mut self, key: FeatureKey, values: Vec<T>) -> Result<()> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "captured feature {} at t={} layer {}",
                key.kind, key.timestep, key.layer
            )));
        }
        if self.entries.contains_key(&key) {
            return Err(Error::param(format!(
                "feature {} at t={} layer {} captured twice",
                key.kind, key.timestep, key.layer
            )));
        }
        self.entries.insert(key, values);
        Ok(())
    }

    pub fn get(&self, key: &FeatureKey) -> Option<&[T]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    /// Looks a feature up or reports which one is missing.
    pub fn require(&self, timestep: usize, layer: usize, kind: FeatureKind) -> Result<&[T]> {
        self.get(&FeatureKey::new(timestep, layer, kind))
            .ok_or(Error::Injection { timestep, layer, kind })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &FeatureKey> + '_ {
        self.entries.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FeatureKey, &[T])> + '_ {
        self.entries.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn timesteps(&self) -> BTreeSet<usize> {
        self.entries.keys().map(|k| k.timestep).collect()
    }

    /// FNV-1a over keys and the `f64` bit patterns of all values.
    pub fn checksum(&self) -> u64 {
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(PRIME);
            }
        };
        for (k, v) in &self.entries {
            eat(&(k.timestep as u64).to_le_bytes());
            eat(&(k.layer as u64).to_le_bytes());
            eat(&k.kind.code().to_le_bytes());
            for x in v {
                eat(&x.as_f64().to_bits().to_le_bytes());
            }
        }
        h
    }
}

/// Which layers receive cached features and how the query is blended.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectionConfig {
    pub layers: BTreeSet<usize>,
    /// Weight of the cached query; `1` ignores the live query entirely.
    pub gamma: f64,
    pub inject_f: bool,
    pub inject_kv: bool,
}

impl InjectionConfig {
    pub fn new(layers: impl IntoIterator<Item = usize>, gamma: f64, inject_f: bool, inject_kv: bool) -> Result<Self> {
        let cfg = Self {
            layers: layers.into_iter().collect(),
            gamma,
            inject_f,
            inject_kv,
        };
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::param(format!("gamma {gamma} outside [0, 1]")));
        }
        Ok(cfg)
    }

    /// No layers: denoising runs exactly as without injection.
    pub fn empty() -> Self {
        Self {
            layers: BTreeSet::new(),
            gamma: 0.0,
            inject_f: false,
            inject_kv: false,
        }
    }

    /// Every kind at every layer with `gamma = 1`: the reconstruction limit.
    pub fn full(blocks: usize) -> Self {
        Self {
            layers: (0..blocks).collect(),
            gamma: 1.0,
            inject_f: true,
            inject_kv: true,
        }
    }

    /// Keys and values (no feature branch) at the deeper half of the stack.
    pub fn deep(blocks: usize, gamma: f64) -> Result<Self> {
        Self::new(blocks / 2..blocks, gamma, false, true)
    }

    /// Keys and values (no feature branch) at the shallower half of the stack.
    pub fn shallow(blocks: usize, gamma: f64) -> Result<Self> {
        Self::new(0..blocks / 2, gamma, false, true)
    }

    pub fn validate(&self, blocks: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::param(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if let Some(&l) = self.layers.iter().find(|&&l| l >= blocks) {
            return Err(Error::param(format!("injection layer {l} but model has {blocks} blocks")));
        }
        Ok(())
    }

    /// Which kinds are read from the cache at `layer`.
    pub fn kinds_at(&self, layer: usize) -> Vec<FeatureKind> {
        if !self.layers.contains(&layer) {
            return Vec::new();
        }
        let mut kinds = Vec::new();
        if self.inject_f {
            kinds.push(FeatureKind::F);
        }
        if self.inject_kv {
            kinds.extend([FeatureKind::Q, FeatureKind::K, FeatureKind::V]);
        }
        kinds
    }
}

/// `softmax(Q K^T / sqrt(d)) V` over `tokens x dim` row-major arrays.
pub(crate) fn attention<T: Scalar>(q: &[T], k: &[T], v: &[T], tokens: usize, dim: usize) -> (Vec<T>, Vec<T>) {
    let scale = T::one() / T::lit(dim as f64).sqrt();
    let mut probs = vec![T::zero(); tokens * tokens];
    for i in 0..tokens {
        let qi = &q[i * dim..(i + 1) * dim];
        let row = &mut probs[i * tokens..(i + 1) * tokens];
        for (j, p) in row.iter_mut().enumerate() {
            let kj = &k[j * dim..(j + 1) * dim];
            *p = qi.iter().zip(kj).map(|(&a, &b)| a * b).sum::<T>() * scale;
        }
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for p in row.iter_mut() {
            *p = (*p - max).exp();
            total += *p;
        }
        for p in row.iter_mut() {
            *p /= total;
        }
    }
    let mut out = vec![T::zero(); tokens * dim];
    for i in 0..tokens {
        let dst = &mut out[i * dim..(i + 1) * dim];
        for j in 0..tokens {
            let p = probs[i * tokens + j];
            for (o, &x) in dst.iter_mut().zip(&v[j * dim..(j + 1) * dim]) {
                *o += p * x;
            }
        }
    }
    (out, probs)
}

/// Mixes the cached and live queries: `gamma * q_inv + (1 - gamma) * q`.
pub(crate) fn blend_query<T: Scalar>(q: &[T], q_inv: &[T], gamma: f64) -> Vec<T> {
    let g = T::lit(gamma);
    let h = T::one() - g;
    q.iter().zip(q_inv).map(|(&live, &inv)| g * inv + h * live).collect()
}

/// `Attn(gamma * Q_inv + (1 - gamma) * Q, K_inv, V_inv)` for `tokens x dim`
/// row-major arrays.
pub fn blended_attention<T: Scalar>(
    q: &[T],
    q_inv: &[T],
    k_inv: &[T],
    v_inv: &[T],
    tokens: usize,
    dim: usize,
    gamma: f64,
) -> Result<Vec<T>> {
    let n = tokens * dim;
    for (name, a) in [("Q", q), ("Q_inv", q_inv), ("K_inv", k_inv), ("V_inv", v_inv)] {
        if a.len() != n || n == 0 {
            return Err(Error::shape(format!("{name} of {tokens}x{dim}"), a.len()));
        }
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::param(format!("gamma {gamma} outside [0, 1]")));
    }
    let blended = blend_query(q, q_inv, gamma);
    Ok(attention(&blended, k_inv, v_inv, tokens, dim).0)
}

/// DDIM inversion that records every tapped feature.
pub fn invert_with_capture<T: Scalar>(
    z0: &VideoLatent<T>,
    t_target: Timestep,
    model: &dyn Denoiser<T>,
    c: &Condition<T>,
    sched: &NoiseSchedule<T>,
) -> Result<(VideoLatent<T>, FeatureCache<T>, usize)> {
    if !model.has_taps() {
        return Err(Error::Capability(format!("{} has no feature taps", model.name())));
    }
    let mut cache = FeatureCache::new();
    let (z, nfe) = ddim_invert(z0, t_target, model, c, sched, Some(&mut cache))?;
    Ok((z, cache, nfe))
}

/// Runs `n_v` DDIM steps from `t_v`, routing every model call through the
/// injection hooks. Returns the clean prediction of the last step.
#[allow(clippy::too_many_arguments)]
pub fn denoise_with_injection<T: Scalar>(
    z_tv: &VideoLatent<T>,
    t_v: Timestep,
    n_v: usize,
    model: &dyn Denoiser<T>,
    c: &Condition<T>,
    sched: &NoiseSchedule<T>,
    cache: &FeatureCache<T>,
    cfg: &InjectionConfig,
) -> Result<RefineOutput<T>> {
    if n_v == 0 || n_v > t_v.0 {
        return Err(Error::param(format!("n_V={n_v} must lie in [1, {}]", t_v.0)));
    }
    let mut hooks = Hooks {
        capture: None,
        inject: Some((cache, cfg)),
    };
    ddim_sample_with(z_tv, t_v, Timestep(t_v.0 - n_v), model, c, sched, &mut hooks, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar two-token attention written out by hand.
    fn two_token_oracle(q: [f64; 2], k: [f64; 2], v: [f64; 2]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for i in 0..2 {
            let s0 = q[i] * k[0];
            let s1 = q[i] * k[1];
            let p0 = 1.0 / (1.0 + (s1 - s0).exp());
            out[i] = p0 * v[0] + (1.0 - p0) * v[1];
        }
        out
    }

    #[test]
    fn two_token_hand_case() {
        // Blended query is [0.5, 0.5]; both rows see logits [0.5, 1.0].
        let oracle = two_token_oracle([0.5, 0.5], [1.0, 2.0], [3.0, 5.0]);
        let frozen = 4.244918662403709;
        assert!((oracle[0] - frozen).abs() < 1e-14 && (oracle[1] - frozen).abs() < 1e-14);
        let out = blended_attention(&[1.0, 0.0], &[0.0, 1.0], &[1.0, 2.0], &[3.0, 5.0], 2, 1, 0.5).unwrap();
        assert!((out[0] - frozen).abs() < 1e-14);
        assert!((out[1] - frozen).abs() < 1e-14);
    }

    #[test]
    fn gamma_one_ignores_live_query() {
        let q_inv = [0.3, -0.2, 0.9, 0.1, 0.0, 0.4];
        let k = [0.5, 0.1, -0.3, 0.2, 0.7, 0.0];
        let v = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let a = blended_attention(&[9.0; 6], &q_inv, &k, &v, 3, 2, 1.0).unwrap();
        let b = blended_attention(&[-4.0; 6], &q_inv, &k, &v, 3, 2, 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_token_returns_value() {
        for gamma in [0.0, 0.3, 1.0] {
            let out = blended_attention(&[5.0, 1.0], &[-2.0, 0.0], &[0.1, 0.2], &[7.0, -3.0], 1, 2, gamma).unwrap();
            assert_eq!(out, vec![7.0, -3.0]);
        }
    }

    #[test]
    fn shape_and_gamma_errors() {
        assert!(matches!(
            blended_attention(&[1.0], &[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0], 2, 1, 0.5),
            Err(Error::Shape { .. })
        ));
        assert!(blended_attention(&[1.0], &[1.0], &[1.0], &[1.0], 1, 1, 1.5).is_err());
        assert!(InjectionConfig::new([0], -0.1, true, true).is_err());
        assert!(InjectionConfig::full(4).validate(3).is_err());
    }

    #[test]
    fn cache_is_write_once() {
        let mut c = FeatureCache::<f64>::new();
        let key = FeatureKey::new(3, 1, FeatureKind::K);
        c.insert(key, vec![1.0, 2.0]).unwrap();
        assert!(c.insert(key, vec![1.0, 2.0]).is_err());
        assert!(c.insert(FeatureKey::new(3, 1, FeatureKind::V), vec![f64::NAN]).is_err());
        assert!(matches!(
            c.require(2, 1, FeatureKind::K),
            Err(Error::Injection {
                timestep: 2,
                layer: 1,
                kind: FeatureKind::K
            })
        ));
    }

    #[test]
    fn named_layer_sets() {
        let deep = InjectionConfig::deep(4, 0.8).unwrap();
        assert_eq!(deep.layers.iter().copied().collect::<Vec<_>>(), vec![2, 3]);
        let shallow = InjectionConfig::shallow(4, 0.5).unwrap();
        assert_eq!(shallow.layers.iter().copied().collect::<Vec<_>>(), vec![0, 1]);
        assert!(shallow.kinds_at(2).is_empty());
        assert_eq!(InjectionConfig::full(4).kinds_at(3).len(), 4);
    }
}
