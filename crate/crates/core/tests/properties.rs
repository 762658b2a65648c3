//! Randomized properties exercised through the public API.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pmdlab::agent::{linear_anneal, ReplayBuffer, TemperatureSchedule};
use pmdlab::env::EnvConfig;
use pmdlab::harness::{run_seed, SweepSpec};
use pmdlab::metrics::{normalize_return, robustness, PerformanceTable};
use pmdlab::neural::{Matrix, Mlp, PolicyHead, HIDDEN_GAIN};
use pmdlab::regularizers::{
    bregman, drift_value, h_value, kl_divergence, shannon_entropy, tsallis_entropy,
    ActionDistribution, DriftSpec, RegularizerSpec,
};

fn simplex(raw: Vec<f64>) -> ActionDistribution {
    let s: f64 = raw.iter().sum();
    ActionDistribution::new(raw.into_iter().map(|x| x / s).collect()).unwrap()
}

fn arb_dist() -> impl Strategy<Value = ActionDistribution> {
    (2usize..=16).prop_flat_map(|n| prop::collection::vec(0.001f64..1.0, n).prop_map(simplex))
}

fn arb_pair() -> impl Strategy<Value = (ActionDistribution, ActionDistribution)> {
    (2usize..=16).prop_flat_map(|n| {
        (
            prop::collection::vec(0.001f64..1.0, n).prop_map(simplex),
            prop::collection::vec(0.001f64..1.0, n).prop_map(simplex),
        )
    })
}

fn all_envs() -> Vec<EnvConfig> {
    let mut envs = EnvConfig::standard_suite();
    envs.extend(EnvConfig::upscaled_catch_suite());
    envs
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn bregman_self_distance_vanishes(p in arb_dist()) {
        for h in RegularizerSpec::catalogue() {
            prop_assert!(bregman(h, &p, &p).unwrap().abs() <= 1e-12);
        }
    }

    #[test]
    fn shannon_bregman_is_kl((p, q) in arb_pair()) {
        let kl: f64 = p.probs().iter().zip(q.probs()).map(|(a, b)| a * (a / b).ln()).sum();
        prop_assert!((bregman(RegularizerSpec::NegShannon, &p, &q).unwrap() - kl).abs() <= 1e-10);
        let rkl = drift_value(DriftSpec::ReverseKL, &p, &q).unwrap();
        let via_bregman = drift_value(DriftSpec::Bregman(RegularizerSpec::NegShannon), &p, &q).unwrap();
        prop_assert!((rkl - via_bregman).abs() <= 1e-10);
        let fkl = drift_value(DriftSpec::ForwardKL, &p, &q).unwrap();
        prop_assert!((fkl - kl_divergence(&q, &p).unwrap()).abs() <= 1e-15);
    }

    #[test]
    fn tsallis_approaches_shannon(p in arb_dist()) {
        let h = shannon_entropy(&p);
        for m in [1.0 - 1e-4, 1.0 + 1e-4] {
            prop_assert!((tsallis_entropy(&p, m) - h).abs() <= 1e-3);
            let neg = h_value(RegularizerSpec::NegTsallis { m }, &p);
            prop_assert!((neg + h).abs() <= 1e-3);
        }
    }

    #[test]
    fn reward_scale_is_linear(env_index in 0usize..6, seed in any::<u64>(), scale in 0.05f64..20.0, actions in prop::collection::vec(0usize..3, 40)) {
        let base = all_envs()[env_index].clone();
        let scaled = base.clone().with_reward_scale(scale);
        let (mut s1, o1) = base.reset(seed).unwrap();
        let (mut s2, o2) = scaled.reset(seed).unwrap();
        prop_assert_eq!(o1, o2);
        for &a in &actions {
            if s1.is_done() {
                break;
            }
            let a = a % base.action_count();
            let (n1, r1) = base.step(&s1, a).unwrap();
            let (n2, r2) = scaled.step(&s2, a).unwrap();
            prop_assert_eq!(r2.reward, scale * r1.reward);
            prop_assert_eq!(&r1.observation, &r2.observation);
            prop_assert_eq!(r1.done, r2.done);
            s1 = n1;
            s2 = n2;
        }
    }

    #[test]
    fn episodes_are_bounded_and_end_once(env_index in 0usize..6, seed in any::<u64>(), cap in prop::option::of(1usize..60)) {
        let env = EnvConfig { max_episode_steps: cap, ..all_envs()[env_index].clone() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut state, obs) = env.reset(seed).unwrap();
        prop_assert_eq!(obs.len(), env.obs_dim());
        let mut total = 0.0;
        let mut dones = 0;
        while !state.is_done() {
            let (next, r) = env.step(&state, rng.gen_range(0..env.action_count())).unwrap();
            prop_assert_eq!(r.observation.len(), env.obs_dim());
            dones += usize::from(r.done);
            total += r.reward;
            state = next;
        }
        prop_assert_eq!(dones, 1);
        prop_assert!(state.step_count() <= env.max_steps());
        prop_assert!(env.step(&state, 0).is_err());
        let b = env.bounds();
        if cap.is_none() {
            prop_assert!(total >= b.r_min - 1e-9 && total <= b.r_max + 1e-9);
        }
    }

    #[test]
    fn policy_outputs_are_distributions(seed in any::<u64>(), scale in 0.1f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Mlp::orthogonal(&[4, 8, 3], HIDDEN_GAIN, scale, &mut rng).unwrap();
        let head = PolicyHead::new(net);
        let x = Matrix::from_shape_fn((5, 4), |_| rng.gen_range(-5.0..5.0));
        let probs = head.probs(&x).unwrap();
        for row in probs.rows() {
            prop_assert!(row.iter().all(|&p| p >= 0.0 && p <= 1.0));
            prop_assert!((row.sum() - 1.0).abs() <= 1e-9);
            prop_assert!(ActionDistribution::new(row.to_vec()).is_ok());
        }
    }

    #[test]
    fn polyak_contracts_by_tau(seed in any::<u64>(), tau in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let online = Mlp::orthogonal(&[3, 6, 2], HIDDEN_GAIN, 1.0, &mut rng).unwrap();
        let mut target = Mlp::orthogonal(&[3, 6, 2], HIDDEN_GAIN, 1.0, &mut rng).unwrap();
        let before: Vec<f64> = target.params().zip(online.params()).flat_map(|(t, o)| (t - o).into_iter()).collect();
        target.polyak_update(&online, tau).unwrap();
        let after: Vec<f64> = target.params().zip(online.params()).flat_map(|(t, o)| (t - o).into_iter()).collect();
        for (b, a) in before.iter().zip(&after) {
            prop_assert!((a - tau * b).abs() <= 1e-12);
        }
    }

    #[test]
    fn replay_never_exceeds_capacity(capacity in 1usize..64, pushes in 0usize..200) {
        let mut buf = ReplayBuffer::new(capacity, 2).unwrap();
        for i in 0..pushes {
            buf.push_parts(&[i as f64, 0.0], 0, i as f64, &[0.0, 0.0], false).unwrap();
        }
        prop_assert_eq!(buf.len(), pushes.min(capacity));
        if pushes > 0 {
            // oldest surviving entry is the first one not evicted
            let oldest = buf.get(0).unwrap();
            prop_assert_eq!(oldest.reward, pushes.saturating_sub(capacity) as f64);
        }
    }

    #[test]
    fn schedules_stay_nonnegative(v in 0.0f64..100.0, step in 0u64..2_000_000, total in 1u64..1_000_000) {
        prop_assert!(linear_anneal(v, step, total) >= 0.0);
        prop_assert_eq!(linear_anneal(v, total, total), 0.0);
        for s in [TemperatureSchedule::Constant { value: v }, TemperatureSchedule::LinearAnneal { initial: v }] {
            prop_assert!(s.scheduled_value(step, total).unwrap() >= 0.0);
        }
    }

    #[test]
    fn normalization_is_scale_invariant(raw in -600.0f64..600.0, c in 0.01f64..100.0, env_index in 0usize..6) {
        let b = all_envs()[env_index].bounds();
        let scaled = all_envs()[env_index].clone().with_reward_scale(c).bounds();
        let d1 = normalize_return(raw, b).unwrap();
        let d2 = normalize_return(raw * c, scaled).unwrap();
        prop_assert!((d1 - d2).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&d1));
    }

    #[test]
    fn robustness_monotone_in_threshold(values in prop::collection::vec(0.0f64..=1.0, 1..50), t1 in 0.0f64..0.99, t2 in 0.0f64..0.99) {
        let table = PerformanceTable::from_values(&values).unwrap();
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        prop_assert!(robustness(lo, &table).unwrap() + 1e-12 >= robustness(hi, &table).unwrap());
    }

    #[test]
    fn run_seeds_depend_on_every_field(idx in 0usize..10, other in 10usize..20) {
        prop_assert_ne!(run_seed("s", "a0_l0", "catch", idx), run_seed("s", "a0_l0", "catch", other));
        prop_assert_ne!(run_seed("s", "a0_l0", "catch", idx), run_seed("t", "a0_l0", "catch", idx));
        prop_assert_ne!(run_seed("s", "a0_l0", "catch", idx), run_seed("s", "a0_l0", "deepsea", idx));
        prop_assert_eq!(run_seed("s", "a0_l0", "catch", idx), run_seed("s", "a0_l0", "catch", idx));
    }
}

#[test]
fn spec_json_round_trips_through_presets() {
    for (h, d) in [
        (RegularizerSpec::NegShannon, DriftSpec::ReverseKL),
        (
            RegularizerSpec::Max,
            DriftSpec::Bregman(RegularizerSpec::sq_l2()),
        ),
        (RegularizerSpec::NegTsallis { m: 0.5 }, DriftSpec::ForwardKL),
    ] {
        for spec in [SweepSpec::full("x", h, d), SweepSpec::desk("x", h, d)] {
            let back = SweepSpec::from_json(&spec.to_json()).unwrap();
            assert_eq!(back, spec);
            assert_eq!(back.content_hash(), spec.content_hash());
        }
    }
}
