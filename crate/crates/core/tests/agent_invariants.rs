use pmdlab::agent::{
    actor_loss, critic_targets, sample_action, Agent, AgentConfig, TemperatureSchedule,
};
use pmdlab::env::EnvConfig;
use pmdlab::neural::{Matrix, Mlp, PolicyHead, HIDDEN_GAIN};
use pmdlab::regularizers::{drift_value, ActionDistribution, DriftSpec, RegularizerSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config(alpha: f64, lambda: f64) -> AgentConfig {
    AgentConfig {
        alpha_schedule: TemperatureSchedule::constant(alpha),
        lambda_schedule: TemperatureSchedule::constant(lambda),
        total_env_steps: 256 * 4,
        hidden: vec![16, 16],
        ..AgentConfig::default()
    }
}

#[test]
fn drift_always_references_the_frozen_snapshot() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let net = Mlp::orthogonal(&[4, 8, 3], HIDDEN_GAIN, 0.5, &mut rng).unwrap();
    let mut policy = PolicyHead::new(net);
    let obs = Matrix::from_shape_fn((6, 4), |_| rng.gen_range(-1.0..1.0));
    let q = Matrix::from_shape_fn((6, 3), |_| rng.gen_range(-1.0..1.0));
    let snapshot = policy.probs(&obs).unwrap();
    let frozen = snapshot.clone();
    let cfg = AgentConfig {
        drift: DriftSpec::Bregman(RegularizerSpec::sq_l2()),
        ..AgentConfig::default()
    };

    // move the live policy several times; the snapshot must not follow it
    for _ in 0..3 {
        for p in policy.net.params_mut() {
            p.mapv_inplace(|w| w + rng.gen_range(-0.3..0.3));
        }
        let (terms, _) = actor_loss(&cfg, &policy, &obs, &q, &snapshot, 0.0, 1.0).unwrap();
        assert_eq!(snapshot, frozen);
        let live = policy.probs(&obs).unwrap();
        let expected: f64 = live
            .rows()
            .into_iter()
            .zip(frozen.rows())
            .map(|(n, o)| {
                drift_value(
                    cfg.drift,
                    &ActionDistribution::new(n.to_vec()).unwrap(),
                    &ActionDistribution::new(o.to_vec()).unwrap(),
                )
                .unwrap()
            })
            .sum::<f64>()
            / 6.0;
        assert!((terms.drift - expected).abs() < 1e-12);
        assert!(terms.drift > 0.0);
    }
}

#[test]
fn exact_expectation_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..5 {
        let net = Mlp::orthogonal(&[3, 8, 4], HIDDEN_GAIN, 2.0, &mut rng).unwrap();
        let policy = PolicyHead::new(net);
        let obs = Matrix::from_shape_fn((1, 3), |_| rng.gen_range(-1.0..1.0));
        let q = Matrix::from_shape_fn((1, 4), |_| rng.gen_range(-3.0..3.0));
        let probs = policy.probs(&obs).unwrap();
        let (terms, _) =
            actor_loss(&AgentConfig::default(), &policy, &obs, &q, &probs, 0.0, 0.0).unwrap();

        let n = 1_000_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            let a = sample_action(probs.row(0), &mut rng);
            let x = -q[[0, a]];
            sum += x;
            sq += x * x;
        }
        let mean = sum / n as f64;
        let se = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!(
            (mean - terms.neg_q).abs() <= 3.0 * se,
            "exact {} vs sampled {mean} (se {se})",
            terms.neg_q
        );
    }
}

#[test]
fn scaled_rewards_and_temperatures_scale_first_targets() {
    let (alpha, lambda, c) = (0.2, 0.5, 3.0);
    let mut base = Agent::new(config(alpha, lambda), EnvConfig::cartpole(), 17).unwrap();
    let mut scaled = Agent::new(
        config(c * alpha, c * lambda),
        EnvConfig::cartpole().with_reward_scale(c),
        17,
    )
    .unwrap();
    base.collect(256).unwrap();
    scaled.collect(256).unwrap();

    // a critic whose outputs are c times larger is the scale-c counterpart of the base critic
    for net in scaled.critics_mut().target.iter_mut() {
        let n = net.params().count();
        for p in net.params_mut().skip(n - 2) {
            p.mapv_inplace(|w| w * c);
        }
    }
    let batch_base = base
        .buffer()
        .sample(64, &mut ChaCha8Rng::seed_from_u64(1))
        .unwrap();
    let batch_scaled = scaled
        .buffer()
        .sample(64, &mut ChaCha8Rng::seed_from_u64(1))
        .unwrap();
    assert_eq!(batch_base.obs, batch_scaled.obs);

    let y = critic_targets(
        base.config(),
        base.critics(),
        base.policy(),
        &batch_base,
        alpha,
    )
    .unwrap();
    let y_scaled = critic_targets(
        scaled.config(),
        scaled.critics(),
        scaled.policy(),
        &batch_scaled,
        c * alpha,
    )
    .unwrap();
    for (a, b) in y.iter().zip(&y_scaled) {
        assert!(
            (b - c * a).abs() <= 1e-12 * (1.0 + b.abs()),
            "{b} vs {c} * {a}"
        );
    }
}
