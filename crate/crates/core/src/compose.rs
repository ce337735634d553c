//! Pipelines built from a frame-wise (T2I) and a temporal (T2V) denoiser.
//!
//! The two models run on different schedules, so the only latents passed
//! between them are clean predictions. Every pipeline records its stages in
//! a log that [`audit_stage_log`] checks for that property.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{ddim_invert, ddim_sample, predict_clean, sdedit_refine};
use crate::error::{Error, Result};
use crate::latent::VideoLatent;
use crate::models::{Condition, Denoiser};
use crate::schedule::{forward_noise, NoiseSchedule, Timestep};
use crate::sfi::{denoise_with_injection, invert_with_capture, InjectionConfig};
use crate::Scalar;

/// The two denoisers and their schedules.
#[derive(Clone, Copy)]
pub struct Models<'a, T: Scalar> {
    pub t2i: &'a dyn Denoiser<T>,
    pub sched_i: &'a NoiseSchedule<T>,
    pub t2v: &'a dyn Denoiser<T>,
    pub sched_v: &'a NoiseSchedule<T>,
}

impl<'a, T: Scalar> Models<'a, T> {
    pub fn new(
        t2i: &'a dyn Denoiser<T>,
        sched_i: &'a NoiseSchedule<T>,
        t2v: &'a dyn Denoiser<T>,
        sched_v: &'a NoiseSchedule<T>,
    ) -> Self {
        Self {
            t2i,
            sched_i,
            t2v,
            sched_v,
        }
    }

    fn get(&self, role: Role) -> (&'a dyn Denoiser<T>, &'a NoiseSchedule<T>) {
        match role {
            Role::T2i => (self.t2i, self.sched_i),
            Role::T2v => (self.t2v, self.sched_v),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    T2i,
    T2v,
}

/// How the temporal block refines its clean input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockMode {
    /// Fresh noise to `t_V`, then DDIM.
    Sdedit,
    /// Deterministic inversion to `t_V`, then DDIM with optional feature
    /// injection.
    InversionSfi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub t_i: usize,
    pub t_v: usize,
    /// T2I timestep at which the temporal block is inserted.
    pub t_t2v: usize,
    pub n_v: usize,
    pub block_mode: BlockMode,
    pub injection: Option<InjectionConfig>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            t_i: 20,
            t_v: 4,
            t_t2v: 10,
            n_v: 2,
            block_mode: BlockMode::InversionSfi,
            injection: None,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Checks `1 <= t_T2V <= t_I <= T_I` and `1 <= n_V <= t_V <= T_V`.
    pub fn validate(&self, total_i: usize, total_v: usize) -> Result<()> {
        if !(1 <= self.t_t2v && self.t_t2v <= self.t_i && self.t_i <= total_i) {
            return Err(Error::param(format!(
                "need 1 <= t_T2V <= t_I <= {total_i}, got t_T2V={}, t_I={}",
                self.t_t2v, self.t_i
            )));
        }
        if !(1 <= self.n_v && self.n_v <= self.t_v && self.t_v <= total_v) {
            return Err(Error::param(format!(
                "need 1 <= n_V <= t_V <= {total_v}, got n_V={}, t_V={}",
                self.n_v, self.t_v
            )));
        }
        if let Some(inj) = &self.injection {
            if self.block_mode == BlockMode::Sdedit {
                return Err(Error::param("feature injection requires the inversion block mode"));
            }
            if !(0.0..=1.0).contains(&inj.gamma) {
                return Err(Error::param(format!("gamma {} outside [0, 1]", inj.gamma)));
            }
        }
        Ok(())
    }
}

/// One contiguous run of a single model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub role: Role,
    /// Highest timestep the stage touches.
    pub t_start: usize,
    /// Timestep the stage stops at.
    pub t_end: usize,
    pub nfe: usize,
    /// Stage input is a clean (`t = 0`) latent.
    pub enters_clean: bool,
    /// Stage output is a clean latent or a clean prediction.
    pub exits_clean: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineResult<T> {
    pub output: VideoLatent<T>,
    pub nfe_t2i: usize,
    pub nfe_t2v: usize,
    pub wall_time: f64,
    pub stage_log: Vec<StageRecord>,
}

impl<T> PipelineResult<T> {
    pub fn nfe_total(&self) -> usize {
        self.nfe_t2i + self.nfe_t2v
    }

    /// Number of maximal runs of consecutive T2V stages.
    pub fn t2v_blocks(&self) -> usize {
        let mut blocks = 0;
        let mut prev = None;
        for s in &self.stage_log {
            if s.role == Role::T2v && prev != Some(Role::T2v) {
                blocks += 1;
            }
            prev = Some(s.role);
        }
        blocks
    }
}

/// Every stage must start and finish on clean latents, so no noisy latent
/// of one schedule ever reaches the other model.
pub fn audit_stage_log(log: &[StageRecord]) -> Result<()> {
    for s in log {
        if !s.enters_clean || !s.exits_clean {
            return Err(Error::param(format!("stage {} passes a noisy latent across models", s.name)));
        }
        if s.t_end > s.t_start {
            return Err(Error::param(format!("stage {} runs upwards", s.name)));
        }
    }
    Ok(())
}

// Independent random streams of one pipeline run.
const STREAM_NOISE: u64 = 0;
const STREAM_BLOCK: u64 = 1;
const STREAM_RENOISE: u64 = 2;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

struct Run<'m, 'a, T: Scalar> {
    models: &'m Models<'a, T>,
    c: &'m Condition<T>,
    log: Vec<StageRecord>,
    start: Instant,
}

impl<'m, 'a, T: Scalar> Run<'m, 'a, T> {
    fn new(models: &'m Models<'a, T>, c: &'m Condition<T>) -> Self {
        Self {
            models,
            c,
            log: Vec::new(),
            start: Instant::now(),
        }
    }

    fn record(&mut self, name: &str, role: Role, t_start: usize, t_end: usize, nfe: usize) {
        self.log.push(StageRecord {
            name: name.to_string(),
            role,
            t_start,
            t_end,
            nfe,
            enters_clean: true,
            exits_clean: true,
        });
    }

    /// SDEdit from `t` all the way to a clean latent.
    fn full_sdedit(&mut self, name: &str, role: Role, z: &VideoLatent<T>, t: usize, seed: u64) -> Result<VideoLatent<T>> {
        let (model, sched) = self.models.get(role);
        let mut rng = stream(seed, STREAM_NOISE);
        let out = sdedit_refine(z, Timestep(t), Timestep(0), model, self.c, sched, &mut rng)?;
        self.record(name, role, t, 0, out.nfe);
        Ok(out.partial_latent)
    }

    fn finish(self, output: VideoLatent<T>) -> PipelineResult<T> {
        let sum = |r: Role| self.log.iter().filter(|s| s.role == r).map(|s| s.nfe).sum();
        PipelineResult {
            output,
            nfe_t2i: sum(Role::T2i),
            nfe_t2v: sum(Role::T2v),
            wall_time: self.start.elapsed().as_secs_f64(),
            stage_log: self.log,
        }
    }
}

fn check_t(t: usize, sched_total: usize, what: &str) -> Result<()> {
    if t == 0 || t > sched_total {
        return Err(Error::param(format!("{what}={t} must lie in [1, {sched_total}]")));
    }
    Ok(())
}

/// Frame-wise SDEdit of `z0` with the T2I model.
pub fn run_t2i_only<T: Scalar>(
    z0: &VideoLatent<T>,
    t_i: usize,
    models: &Models<'_, T>,
    c: &Condition<T>,
    seed: u64,
) -> Result<PipelineResult<T>> {
    check_t(t_i, models.sched_i.total_steps(), "t_I")?;
    let mut run = Run::new(models, c);
    let out = run.full_sdedit("t2i", Role::T2i, z0, t_i, seed)?;
    Ok(run.finish(out))
}

/// SDEdit of `z0` with the T2V model.
pub fn run_t2v_only<T: Scalar>(
    z0: &VideoLatent<T>,
    t_v: usize,
    models: &Models<'_, T>,
    c: &Condition<T>,
    seed: u64,
) -> Result<PipelineResult<T>> {
    check_t(t_v, models.sched_v.total_steps(), "t_V")?;
    let mut run = Run::new(models, c);
    let out = run.full_sdedit("t2v", Role::T2v, z0, t_v, seed)?;
    Ok(run.finish(out))
}

fn two_stage<T: Scalar>(
    z0: &VideoLatent<T>,
    order: [(Role, usize); 2],
    models: &Models<'_, T>,
    c: &Condition<T>,
    seed: u64,
) -> Result<PipelineResult<T>> {
    for (role, t) in order {
        if t > 0 {
            let total = models.get(role).1.total_steps();
            check_t(t, total, if role == Role::T2i { "t_I" } else { "t_V" })?;
        }
    }
    if order.iter().all(|&(_, t)| t == 0) {
        return Err(Error::param("a composition needs at least one non-empty stage"));
    }
    let mut run = Run::new(models, c);
    let mut z = z0.clone();
    for (k, (role, t)) in order.into_iter().enumerate() {
        if t == 0 {
            continue;
        }
        let name = if role == Role::T2i { "t2i" } else { "t2v" };
        // Stage seeds differ so the two noising draws are independent.
        z = run.full_sdedit(name, role, &z, t, seed.wrapping_add(k as u64 * 0x9e37_79b9))?;
    }
    Ok(run.finish(z))
}

/// T2V then T2I, each run to a clean latent.
pub fn compose_vi<T: Scalar>(
    z0: &VideoLatent<T>,
    t_v: usize,
    t_i: usize,
    models: &Models<'_, T>,
    c: &Condition<T>,
    seed: u64,
) -> Result<PipelineResult<T>> {
    two_stage(z0, [(Role::T2v, t_v), (Role::T2i, t_i)], models, c, seed)
}

/// T2I then T2V, each run to a clean latent.
pub fn compose_iv<T: Scalar>(
    z0: &VideoLatent<T>,
    t_i: usize,
    t_v: usize,
    models: &Models<'_, T>,
    c: &Condition<T>,
    seed: u64,
) -> Result<PipelineResult<T>> {
    two_stage(z0, [(Role::T2i, t_i), (Role::T2v, t_v)], models, c, seed)
}

/// T2I denoising with a single temporal block inserted at `t_T2V`.
///
/// 1. Noise `z0` to `t_I` and run T2I DDIM down to `t_T2V`. The T2I call at
///    `t_T2V` yields the clean prediction `z0_I`.
/// 2. Refine `z0_I` with the T2V model to `t_V - n_V` and keep the clean
///    prediction `z0_IV` of the last step.
/// 3. Re-noise `z0_IV` to `t_T2V` with a fresh draw and finish T2I to `0`.
///
/// The T2I model is called once per timestep in `t_I..=1`, `t_I` calls in all.
pub fn run_evs<T: Scalar>(
    z0: &VideoLatent<T>,
    cfg: &PipelineConfig,
    models: &Models<'_, T>,
    c: &Condition<T>,
) -> Result<PipelineResult<T>> {
    let (sched_i, sched_v) = (models.sched_i, models.sched_v);
    cfg.validate(sched_i.total_steps(), sched_v.total_steps())?;
    let mut run = Run::new(models, c);

    let z0_i = {
        let mut rng = stream(cfg.seed, STREAM_NOISE);
        let eps = VideoLatent::gaussian(z0.frames(), z0.dim(), &mut rng);
        let mut z = forward_noise(z0, Timestep(cfg.t_i), &eps, sched_i)?;
        if cfg.t_t2v < cfg.t_i {
            z = ddim_sample(&z, Timestep(cfg.t_i), Timestep(cfg.t_t2v), models.t2i, c, sched_i)?.partial_latent;
        }
        let eps_hat = models.t2i.evaluate(&z, Timestep(cfg.t_t2v), c)?;
        run.record("t2i-head", Role::T2i, cfg.t_i, cfg.t_t2v, cfg.t_i - cfg.t_t2v + 1);
        predict_clean(&z, Timestep(cfg.t_t2v), &eps_hat, sched_i)?
    };

    let t_v = Timestep(cfg.t_v);
    let t_stop = cfg.t_v - cfg.n_v;
    let z0_iv = match cfg.block_mode {
        BlockMode::Sdedit => {
            let mut rng = stream(cfg.seed, STREAM_BLOCK);
            let out = sdedit_refine(&z0_i, t_v, Timestep(t_stop), models.t2v, c, sched_v, &mut rng)?;
            run.record("t2v-block", Role::T2v, cfg.t_v, t_stop, out.nfe);
            out.predicted_clean
        }
        BlockMode::InversionSfi => {
            let (out, inv_nfe) = match &cfg.injection {
                Some(inj) => {
                    let (z_tv, cache, inv_nfe) = invert_with_capture(&z0_i, t_v, models.t2v, c, sched_v)?;
                    let out = denoise_with_injection(&z_tv, t_v, cfg.n_v, models.t2v, c, sched_v, &cache, inj)?;
                    (out, inv_nfe)
                }
                None => {
                    let (z_tv, inv_nfe) = ddim_invert(&z0_i, t_v, models.t2v, c, sched_v, None)?;
                    (ddim_sample(&z_tv, t_v, Timestep(t_stop), models.t2v, c, sched_v)?, inv_nfe)
                }
            };
            run.record("t2v-block", Role::T2v, cfg.t_v, t_stop, inv_nfe + out.nfe);
            out.predicted_clean
        }
    };

    // Re-noise to t_T2V. The step taken there uses the drawn noise itself as
    // the noise estimate, which lands on the same draw one level lower.
    let mut rng = stream(cfg.seed, STREAM_RENOISE);
    let eps = VideoLatent::gaussian(z0.frames(), z0.dim(), &mut rng);
    let t_next = cfg.t_t2v - 1;
    let mut z = forward_noise(&z0_iv, Timestep(t_next), &eps, sched_i)?;
    if t_next > 0 {
        let out = ddim_sample(&z, Timestep(t_next), Timestep(0), models.t2i, c, sched_i)?;
        run.record("t2i-tail", Role::T2i, t_next, 0, out.nfe);
        z = out.partial_latent;
    }
    Ok(run.finish(z))
}

/// `rounds` repetitions of a full T2I stage followed by a full T2V stage.
pub fn run_iterated_baseline<T: Scalar>(
    z0: &VideoLatent<T>,
    rounds: usize,
    t_i: usize,
    t_v: usize,
    models: &Models<'_, T>,
    c: &Condition<T>,
    seed: u64,
) -> Result<PipelineResult<T>> {
    if rounds == 0 {
        return Err(Error::param("rounds must be >= 1"));
    }
    check_t(t_i, models.sched_i.total_steps(), "t_I")?;
    check_t(t_v, models.sched_v.total_steps(), "t_V")?;
    let mut run = Run::new(models, c);
    let mut z = z0.clone();
    for r in 0..rounds as u64 {
        z = run.full_sdedit("t2i", Role::T2i, &z, t_i, seed.wrapping_add(2 * r))?;
        z = run.full_sdedit("t2v", Role::T2v, &z, t_v, seed.wrapping_add(2 * r + 1))?;
    }
    Ok(run.finish(z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{
        build_worlds, make_degraded_video, AnalyticDenoiser, AttentionShape, SpatialWorld, TemporalWorld,
        ToyAttentionDenoiser, WorldConfig,
    };
    use crate::schedule::build_linear_beta;

    struct Lab {
        t2i: AnalyticDenoiser<f64, SpatialWorld<f64>>,
        t2v: AnalyticDenoiser<f64, TemporalWorld<f64>>,
        si: NoiseSchedule<f64>,
        sv: NoiseSchedule<f64>,
        tw: TemporalWorld<f64>,
    }

    fn lab() -> Lab {
        let (sw, tw) = build_worlds::<f64>(&WorldConfig::default(), 3).unwrap();
        let si = build_linear_beta::<f64>(50, 1e-4, 0.02).unwrap();
        let sv = build_linear_beta::<f64>(8, 1e-4 * 50.0 / 8.0, 0.02 * 50.0 / 8.0).unwrap();
        Lab {
            t2i: AnalyticDenoiser::new("t2i", sw, si.clone()),
            t2v: AnalyticDenoiser::new("t2v", tw.clone(), sv.clone()),
            si,
            sv,
            tw,
        }
    }

    impl Lab {
        fn models(&self) -> Models<'_, f64> {
            Models::new(&self.t2i, &self.si, &self.t2v, &self.sv)
        }
        fn input(&self, seed: u64) -> VideoLatent<f64> {
            make_degraded_video(&self.tw, &Condition::mode(1), 0.2, seed).unwrap()
        }
        fn counts(&self) -> (u64, u64) {
            (self.t2i.evaluations(), self.t2v.evaluations())
        }
    }

    fn assert_nfe_matches(lab: &Lab, before: (u64, u64), r: &PipelineResult<f64>) {
        let after = lab.counts();
        assert_eq!(after.0 - before.0, r.nfe_t2i as u64);
        assert_eq!(after.1 - before.1, r.nfe_t2v as u64);
        audit_stage_log(&r.stage_log).unwrap();
    }

    #[test]
    fn single_model_pipelines_count_calls() {
        let lab = lab();
        let m = lab.models();
        let c = Condition::mode(1);
        let z = lab.input(0);
        let t_i = lab.si.strength_to_timestep(0.4).unwrap().0;
        assert_eq!(t_i, 20);

        let before = lab.counts();
        let r = run_t2i_only(&z, t_i, &m, &c, 1).unwrap();
        assert_eq!((r.nfe_t2i, r.nfe_t2v), (20, 0));
        assert_nfe_matches(&lab, before, &r);

        let before = lab.counts();
        let r = run_t2v_only(&z, 4, &m, &c, 1).unwrap();
        assert_eq!((r.nfe_t2i, r.nfe_t2v), (0, 4));
        assert_nfe_matches(&lab, before, &r);

        assert!(run_t2i_only(&z, 0, &m, &c, 1).is_err());
        assert!(run_t2v_only(&z, 9, &m, &c, 1).is_err());
    }

    #[test]
    fn compositions_count_and_degenerate() {
        let lab = lab();
        let m = lab.models();
        let c = Condition::mode(1);
        let z = lab.input(4);

        let before = lab.counts();
        let vi = compose_vi(&z, 4, 20, &m, &c, 7).unwrap();
        assert_eq!(vi.nfe_total(), 24);
        assert_eq!(vi.stage_log.iter().map(|s| s.role).collect::<Vec<_>>(), [Role::T2v, Role::T2i]);
        assert_nfe_matches(&lab, before, &vi);

        let iv = compose_iv(&z, 20, 4, &m, &c, 7).unwrap();
        assert_eq!(iv.nfe_total(), 24);

        let only_v = compose_vi(&z, 4, 0, &m, &c, 7).unwrap();
        assert_eq!(only_v.output, run_t2v_only(&z, 4, &m, &c, 7).unwrap().output);
        let only_i = compose_iv(&z, 20, 0, &m, &c, 7).unwrap();
        assert_eq!(only_i.output, run_t2i_only(&z, 20, &m, &c, 7).unwrap().output);
        assert!(compose_iv(&z, 0, 0, &m, &c, 7).is_err());
    }

    #[test]
    fn temporal_stage_couples_frames() {
        let lab = lab();
        let m = lab.models();
        let c = Condition::mode(1);
        let z = lab.input(9);
        let order = [5, 0, 1, 2, 3, 4, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15];
        let a = run_t2v_only(&z.permute_frames(&order).unwrap(), 4, &m, &c, 3).unwrap().output;
        let b = run_t2v_only(&z, 4, &m, &c, 3).unwrap().output.permute_frames(&order).unwrap();
        assert!(a.mean_squared_error(&b).unwrap() > 1e-8);
    }

    #[test]
    fn evs_default_accounting() {
        let lab = lab();
        let m = lab.models();
        let c = Condition::mode(1);
        let z = lab.input(2);
        let before = lab.counts();
        let r = run_evs(&z, &PipelineConfig::default(), &m, &c).unwrap();
        assert_eq!((r.nfe_t2i, r.nfe_t2v), (20, 6));
        assert_eq!(r.t2v_blocks(), 1);
        assert_nfe_matches(&lab, before, &r);
        let names: Vec<_> = r.stage_log.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["t2i-head", "t2v-block", "t2i-tail"]);

        let sd = PipelineConfig {
            block_mode: BlockMode::Sdedit,
            ..Default::default()
        };
        let r = run_evs(&z, &sd, &m, &c).unwrap();
        assert_eq!((r.nfe_t2i, r.nfe_t2v), (20, 2));
    }

    #[test]
    fn evs_is_deterministic() {
        let lab = lab();
        let m = lab.models();
        let c = Condition::mode(1);
        let z = lab.input(2);
        let cfg = PipelineConfig {
            seed: 99,
            ..Default::default()
        };
        assert_eq!(run_evs(&z, &cfg, &m, &c).unwrap().output, run_evs(&z, &cfg, &m, &c).unwrap().output);
    }

    #[test]
    fn evs_rejects_bad_configs() {
        let lab = lab();
        let m = lab.models();
        let c = Condition::mode(1);
        let z = lab.input(2);
        for cfg in [
            PipelineConfig { t_t2v: 0, ..Default::default() },
            PipelineConfig { t_t2v: 21, ..Default::default() },
            PipelineConfig { t_i: 51, ..Default::default() },
            PipelineConfig { n_v: 0, ..Default::default() },
            PipelineConfig { n_v: 5, ..Default::default() },
            PipelineConfig { t_v: 9, n_v: 2, ..Default::default() },
        ] {
            assert!(matches!(run_evs(&z, &cfg, &m, &c), Err(Error::Parameter(_))), "{cfg:?}");
        }
        // Analytic denoisers have no taps to capture.
        let inj = PipelineConfig {
            injection: Some(InjectionConfig::deep(4, 0.8).unwrap()),
            ..Default::default()
        };
        assert!(matches!(run_evs(&z, &inj, &m, &c), Err(Error::Capability(_))));
    }

    #[test]
    fn full_injection_block_is_identity_on_the_bridge() {
        let lab = lab();
        let net = ToyAttentionDenoiser::<f64>::new(
            AttentionShape {
                total_steps: 8,
                ..Default::default()
            },
            5,
        )
        .unwrap();
        let m = Models::new(&lab.t2i, &lab.si, &net, &lab.sv);
        let c = Condition::mode(1);
        let z = lab.input(6);
        let cfg = PipelineConfig {
            t_t2v: 20,
            n_v: 4,
            injection: Some(InjectionConfig::full(4)),
            seed: 12,
            ..Default::default()
        };
        let evs = run_evs(&z, &cfg, &m, &c).unwrap();

        // Same pipeline with the block replaced by the identity.
        let mut rng = stream(cfg.seed, STREAM_NOISE);
        let eps = VideoLatent::gaussian(16, 64, &mut rng);
        let z_ti = forward_noise(&z, Timestep(20), &eps, &lab.si).unwrap();
        let eps_hat = lab.t2i.evaluate(&z_ti, Timestep(20), &c).unwrap();
        let z0_i = predict_clean(&z_ti, Timestep(20), &eps_hat, &lab.si).unwrap();
        let mut rng = stream(cfg.seed, STREAM_RENOISE);
        let eps = VideoLatent::gaussian(16, 64, &mut rng);
        let z_t = forward_noise(&z0_i, Timestep(19), &eps, &lab.si).unwrap();
        let direct = ddim_sample(&z_t, Timestep(19), Timestep(0), &lab.t2i, &c, &lab.si).unwrap();
        let rel = evs.output.sub(&direct.partial_latent).unwrap().norm() / direct.partial_latent.norm();
        assert!(rel < 1e-6, "relative difference {rel}");
    }

    #[test]
    fn iterated_baseline_counts() {
        let lab = lab();
        let m = lab.models();
        let c = Condition::mode(1);
        let z = lab.input(2);
        let before = lab.counts();
        let r = run_iterated_baseline(&z, 2, 20, 4, &m, &c, 0).unwrap();
        assert_eq!(r.nfe_total(), 48);
        assert_eq!(r.t2v_blocks(), 2);
        assert_nfe_matches(&lab, before, &r);
        assert!(run_iterated_baseline(&z, 0, 20, 4, &m, &c, 0).is_err());
    }

    #[test]
    fn audit_flags_noisy_handoffs() {
        let mut s = StageRecord {
            name: "x".into(),
            role: Role::T2v,
            t_start: 4,
            t_end: 2,
            nfe: 2,
            enters_clean: true,
            exits_clean: false,
        };
        assert!(audit_stage_log(std::slice::from_ref(&s)).is_err());
        s.exits_clean = true;
        assert!(audit_stage_log(&[s]).is_ok());
    }
}
