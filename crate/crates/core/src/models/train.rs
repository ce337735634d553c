use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AttentionShape, Condition, Hooks, Prior, TemporalWorld, ToyAttentionDenoiser};
use crate::error::{Error, Result};
use crate::latent::VideoLatent;
use crate::schedule::{forward_noise, NoiseSchedule, Timestep};
use crate::Scalar;

/// Optimizer settings for [`train_toy_denoiser`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainRecipe {
    pub steps: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    pub blocks: usize,
    /// Probability of training a sample with the unconditional class slot.
    pub uncond_rate: f64,
    pub held_out: usize,
}

impl Default for TrainRecipe {
    fn default() -> Self {
        Self {
            steps: 1000,
            lr: 2e-3,
            batch: 8,
            seed: 0,
            blocks: 4,
            uncond_rate: 0.1,
            held_out: 32,
        }
    }
}

impl TrainRecipe {
    fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.blocks == 0 || self.held_out == 0 {
            return Err(Error::param("batch, blocks and held_out must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::param(format!("learning rate {} must be positive", self.lr)));
        }
        if !(0.0..=1.0).contains(&self.uncond_rate) {
            return Err(Error::param("uncond_rate must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Held-out loss of the initialized model.
    pub initial_loss: f64,
    /// Held-out loss of the returned model.
    pub final_loss: f64,
    /// Mean minibatch loss per step.
    pub train_losses: Vec<f64>,
}

struct Example<T> {
    z_t: VideoLatent<T>,
    t: Timestep,
    c: Condition<T>,
    eps: VideoLatent<T>,
}

fn draw_example<T: Scalar>(
    world: &TemporalWorld<T>,
    sched: &NoiseSchedule<T>,
    uncond_rate: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Example<T>> {
    let c = if rng.random::<f64>() < uncond_rate {
        Condition::unconditional()
    } else {
        Condition::mode(rng.random_range(0..world.modes()))
    };
    let z0 = world.draw(world.frames(), &c, rng)?;
    let t = Timestep(rng.random_range(1..=sched.total_steps()));
    let eps = VideoLatent::gaussian(z0.frames(), z0.dim(), rng);
    let z_t = forward_noise(&z0, t, &eps, sched)?;
    Ok(Example { z_t, t, c, eps })
}

fn mean_loss<T: Scalar>(model: &ToyAttentionDenoiser<T>, set: &[Example<T>]) -> Result<f64> {
    let mut total = 0.0;
    for ex in set {
        let out = model.attention_forward(&ex.z_t, ex.t, &ex.c, &mut Hooks::none())?;
        total += out.mean_squared_error(&ex.eps)?.as_f64();
    }
    Ok(total / set.len() as f64)
}

/// Fits a [`ToyAttentionDenoiser`] to the noise-prediction objective on
/// temporal-world samples with Adam.
pub fn train_toy_denoiser<T: Scalar>(
    world: &TemporalWorld<T>,
    sched: &NoiseSchedule<T>,
    recipe: &TrainRecipe,
) -> Result<(ToyAttentionDenoiser<T>, TrainReport)> {
    recipe.validate()?;
    let shape = AttentionShape {
        frames: world.frames(),
        dim: world.dim(),
        blocks: recipe.blocks,
        total_steps: sched.total_steps(),
        modes: world.modes(),
    };
    let mut model = ToyAttentionDenoiser::new(shape, recipe.seed)?;

    let mut held_rng = ChaCha8Rng::seed_from_u64(recipe.seed ^ 0x5eed_0ff5_e7);
    let held: Vec<_> = (0..recipe.held_out)
        .map(|_| draw_example(world, sched, recipe.uncond_rate, &mut held_rng))
        .collect::<Result<_>>()?;
    let initial_loss = mean_loss(&model, &held)?;

    let mut rng = ChaCha8Rng::seed_from_u64(recipe.seed.wrapping_add(1));
    let n = model.param_count();
    let (b1, b2, eps_adam) = (0.9f64, 0.999f64, 1e-8);
    let mut m1 = vec![0.0f64; n];
    let mut m2 = vec![0.0f64; n];
    let mut grad = vec![T::zero(); n];
    let mut train_losses = Vec::with_capacity(recipe.steps);
    let elems = (shape.frames * shape.dim) as f64;

    for step in 0..recipe.steps {
        grad.iter_mut().for_each(|g| *g = T::zero());
        let mut loss = 0.0;
        for _ in 0..recipe.batch {
            let ex = draw_example(world, sched, recipe.uncond_rate, &mut rng)?;
            let (out, trace) = model.forward_traced(&ex.z_t, ex.t, &ex.c)?;
            let k = T::lit(2.0 / (elems * recipe.batch as f64));
            let d_out: Vec<T> = out
                .iter()
                .zip(ex.eps.as_slice())
                .map(|(&o, &e)| {
                    loss += (o - e).as_f64().powi(2);
                    k * (o - e)
                })
                .collect();
            model.backward(&trace, &d_out, &mut grad);
        }
        loss /= elems * recipe.batch as f64;
        if !loss.is_finite() {
            return Err(Error::Training { step, loss });
        }
        train_losses.push(loss);

        let bc1 = 1.0 - b1.powi(step as i32 + 1);
        let bc2 = 1.0 - b2.powi(step as i32 + 1);
        for (i, p) in model.params_mut().iter_mut().enumerate() {
            let g = grad[i].as_f64();
            m1[i] = b1 * m1[i] + (1.0 - b1) * g;
            m2[i] = b2 * m2[i] + (1.0 - b2) * g * g;
            *p -= T::lit(recipe.lr * (m1[i] / bc1) / ((m2[i] / bc2).sqrt() + eps_adam));
        }
    }

    let final_loss = mean_loss(&model, &held)?;
    if !final_loss.is_finite() {
        return Err(Error::Training {
            step: recipe.steps,
            loss: final_loss,
        });
    }
    Ok((
        model,
        TrainReport {
            initial_loss,
            final_loss,
            train_losses,
        },
    ))
}
