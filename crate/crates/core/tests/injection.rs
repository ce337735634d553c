use evs_core::diffusion::{ddim_invert, ddim_sample, predict_clean};
use evs_core::models::{AttentionShape, Condition, ToyAttentionDenoiser};
use evs_core::sfi::{denoise_with_injection, invert_with_capture, FeatureCache, FeatureKind, InjectionConfig};
use evs_core::{build_linear_beta, forward_noise, Latent, Timestep};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn shape() -> AttentionShape {
    AttentionShape {
        frames: 6,
        dim: 8,
        blocks: 4,
        total_steps: 8,
        modes: 2,
    }
}

fn sched() -> evs_core::Schedule {
    build_linear_beta(8, 6.25e-4, 0.125).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn injection_never_mutates_the_cache(
        seed in 0u64..10_000,
        t_v in 1usize..=8,
        nfrac in 0.0f64..=1.0,
        gamma in 0.0f64..=1.0,
        mask in 0u8..16,
        inject_f in any::<bool>(),
    ) {
        let net = ToyAttentionDenoiser::<f64>::new(shape(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z0 = Latent::gaussian(6, 8, &mut rng);
        let c = Condition::mode((seed % 2) as usize);
        let (zt, cache, nfe) = invert_with_capture(&z0, Timestep(t_v), &net, &c, &sched()).unwrap();
        prop_assert_eq!(nfe, t_v);
        prop_assert_eq!(cache.len(), t_v * 4 * 4);
        let before = cache.checksum();
        let layers: Vec<usize> = (0..4).filter(|l| mask & (1 << l) != 0).collect();
        let cfg = InjectionConfig::new(layers, gamma, inject_f, true).unwrap();
        let n_v = 1 + ((t_v - 1) as f64 * nfrac).round() as usize;
        let out = denoise_with_injection(&zt, Timestep(t_v), n_v, &net, &c, &sched(), &cache, &cfg).unwrap();
        prop_assert_eq!(out.nfe, n_v);
        prop_assert_eq!(cache.checksum(), before);
    }

    #[test]
    fn empty_injection_equals_plain_sampling(seed in 0u64..10_000, t_v in 1usize..=8, nfrac in 0.0f64..=1.0) {
        let net = ToyAttentionDenoiser::<f64>::new(shape(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let z0 = Latent::gaussian(6, 8, &mut rng);
        let c = Condition::unconditional();
        let s = sched();
        let (zt, cache, _) = invert_with_capture(&z0, Timestep(t_v), &net, &c, &s).unwrap();
        let (plain_zt, _) = ddim_invert(&z0, Timestep(t_v), &net, &c, &s, None).unwrap();
        prop_assert_eq!(&zt, &plain_zt);
        let n_v = 1 + ((t_v - 1) as f64 * nfrac).round() as usize;
        let a = denoise_with_injection(&zt, Timestep(t_v), n_v, &net, &c, &s, &cache, &InjectionConfig::empty()).unwrap();
        let b = ddim_sample(&zt, Timestep(t_v), Timestep(t_v - n_v), &net, &c, &s).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn predict_clean_inverts_forward_noise(seed in 0u64..10_000, t in 1usize..=50) {
        let s = build_linear_beta::<f64>(50, 1e-4, 0.02).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z0 = Latent::gaussian(4, 5, &mut rng);
        let eps = Latent::gaussian(4, 5, &mut rng);
        let zt = forward_noise(&z0, Timestep(t), &eps, &s).unwrap();
        let back = predict_clean(&zt, Timestep(t), &eps, &s).unwrap();
        let rel = back.sub(&z0).unwrap().norm() / z0.norm();
        prop_assert!(rel <= 1e-10, "relative error {}", rel);
    }
}

#[test]
fn full_injection_reconstructs_for_arbitrary_weights() {
    for seed in 0..5 {
        let net = ToyAttentionDenoiser::<f64>::new(shape(), 100 + seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z0 = Latent::gaussian(6, 8, &mut rng);
        let c = Condition::mode(1);
        for t_v in [1, 4, 8] {
            let (zt, cache, _) = invert_with_capture(&z0, Timestep(t_v), &net, &c, &sched()).unwrap();
            let out = denoise_with_injection(&zt, Timestep(t_v), t_v, &net, &c, &sched(), &cache, &InjectionConfig::full(4))
                .unwrap()
                .partial_latent;
            let rel = out.sub(&z0).unwrap().norm() / z0.norm();
            assert!(rel < 1e-6, "seed {seed} t_V {t_v}: {rel}");
        }
    }
}

#[test]
fn one_step_cache_holds_every_layer_and_kind() {
    let net = ToyAttentionDenoiser::<f64>::new(shape(), 1).unwrap();
    let z0 = Latent::filled(6, 8, 0.3);
    let (_, cache, _): (_, FeatureCache<f64>, _) =
        invert_with_capture(&z0, Timestep(1), &net, &Condition::mode(0), &sched()).unwrap();
    assert_eq!(cache.len(), 4 * 4);
    for l in 0..4 {
        for k in FeatureKind::ALL {
            assert_eq!(cache.require(1, l, k).unwrap().len(), 6 * 8);
        }
    }
    assert_eq!(cache.timesteps().into_iter().collect::<Vec<_>>(), vec![1]);
}
