//! Finite-difference gradient checks shared by the gradient tests and the acceptance gate.

#![allow(dead_code)]

use pmdlab::agent::{actor_loss, alpha_loss, critic_loss, AgentConfig, Batch, Transition};
use pmdlab::neural::{Matrix, Mlp, PolicyHead, TwinCritic, HIDDEN_GAIN};
use pmdlab::regularizers::{DriftSpec, RegularizerSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-6;
const OBS: usize = 3;
const ACTIONS: usize = 3;

fn net(rng: &mut ChaCha8Rng, out_gain: f64) -> Mlp {
    Mlp::orthogonal(&[OBS, 5, ACTIONS], HIDDEN_GAIN, out_gain, rng).unwrap()
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_shape_fn((rows, cols), |_| rng.gen_range(-scale..scale))
}

fn random_probs(rng: &mut ChaCha8Rng, rows: usize) -> Matrix {
    let mut m = Matrix::from_shape_fn((rows, ACTIONS), |_| rng.gen_range(0.05..1.0));
    for mut r in m.rows_mut() {
        let s = r.sum();
        r /= s;
    }
    m
}

/// Relative error of the whole gradient vector against central differences.
fn relative_error<F: Fn(&Mlp) -> f64>(base: &Mlp, analytic: &[Matrix], eval: F) -> f64 {
    let mut diff = 0.0;
    let mut norm_a = 0.0;
    let mut norm_f = 0.0;
    for (pi, g) in analytic.iter().enumerate() {
        for idx in 0..g.len() {
            let (r, c) = (idx / g.ncols(), idx % g.ncols());
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus.params_mut().nth(pi).unwrap()[[r, c]] += FD_STEP;
            minus.params_mut().nth(pi).unwrap()[[r, c]] -= FD_STEP;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
            let an = g[[r, c]];
            diff += (fd - an).powi(2);
            norm_a += an * an;
            norm_f += fd * fd;
        }
    }
    diff.sqrt() / norm_a.sqrt().max(norm_f.sqrt()).max(1e-8)
}

/// Every drift kind paired with a regularizer, plus every regularizer with reverse KL.
pub fn loss_pairs() -> Vec<(RegularizerSpec, DriftSpec)> {
    let hs = RegularizerSpec::catalogue();
    let mut drifts = vec![DriftSpec::ReverseKL, DriftSpec::ForwardKL];
    drifts.extend(hs.iter().copied().map(DriftSpec::Bregman));
    let mut out: Vec<_> = drifts
        .iter()
        .enumerate()
        .map(|(i, d)| (hs[i % hs.len()], *d))
        .collect();
    out.extend(hs.into_iter().map(|h| (h, DriftSpec::ReverseKL)));
    out
}

/// One labelled relative error per random draw of the actor loss.
pub fn actor_errors(draws: usize, seed: u64) -> Vec<(String, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = loss_pairs();
    (0..draws)
        .map(|draw| {
            let (h, d) = pairs[draw % pairs.len()];
            let config = AgentConfig {
                regularizer: h,
                drift: d,
                ..AgentConfig::default()
            };
            let policy = PolicyHead::new(net(&mut rng, 0.8));
            let obs = random_matrix(&mut rng, 6, OBS, 1.5);
            let q_hat = random_matrix(&mut rng, 6, ACTIONS, 2.0);
            let old = random_probs(&mut rng, 6);
            let alpha = rng.gen_range(0.01..1.0);
            let lambda = rng.gen_range(0.01..1.0);
            let (_, grads) =
                actor_loss(&config, &policy, &obs, &q_hat, &old, alpha, lambda).unwrap();
            let err = relative_error(&policy.net, &grads, |n| {
                let p = PolicyHead::new(n.clone());
                actor_loss(&config, &p, &obs, &q_hat, &old, alpha, lambda)
                    .unwrap()
                    .0
                    .total
            });
            (format!("actor draw {draw} ({h}, {d})"), err)
        })
        .collect()
}

fn batch(rng: &mut ChaCha8Rng, n: usize) -> Batch {
    let ts: Vec<Transition> = (0..n)
        .map(|i| Transition {
            obs: (0..OBS).map(|_| rng.gen_range(-1.5..1.5)).collect(),
            action: rng.gen_range(0..ACTIONS),
            reward: rng.gen_range(-1.0..1.0),
            next_obs: (0..OBS).map(|_| rng.gen_range(-1.5..1.5)).collect(),
            done: i % 4 == 3,
        })
        .collect();
    Batch::from_transitions(&ts).unwrap()
}

/// Relative errors of both online critics per random draw of the critic loss.
pub fn critic_errors(draws: usize, seed: u64) -> Vec<(String, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let regs = RegularizerSpec::catalogue();
    let mut out = Vec::with_capacity(2 * draws);
    for draw in 0..draws {
        let config = AgentConfig {
            regularizer: regs[draw % regs.len()],
            use_regularized_q: draw % 2 == 0,
            ..AgentConfig::default()
        };
        let policy = PolicyHead::new(net(&mut rng, 0.8));
        let mut critics = TwinCritic::new(net(&mut rng, 1.0), net(&mut rng, 1.0)).unwrap();
        critics.target = [net(&mut rng, 1.0), net(&mut rng, 1.0)];
        let b = batch(&mut rng, 8);
        let alpha = rng.gen_range(0.0..0.5);
        let (_, grads) = critic_loss(&config, &critics, &policy, &b, alpha).unwrap();
        for which in 0..2 {
            let err = relative_error(&critics.online[which], &grads[which], |n| {
                let mut c = critics.clone();
                c.online[which] = n.clone();
                critic_loss(&config, &c, &policy, &b, alpha).unwrap().0
            });
            out.push((
                format!("critic draw {draw} net {which} ({})", config.regularizer),
                err,
            ));
        }
    }
    out
}

/// Relative error of the temperature-loss derivative per random draw.
pub fn alpha_errors(draws: usize, seed: u64) -> Vec<(String, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..draws)
        .map(|draw| {
            let h: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.1..0.0)).collect();
            let log_alpha = rng.gen_range(-6.0..1.0);
            let h_bar = rng.gen_range(-1.1..0.0);
            let (_, g) = alpha_loss(&h, log_alpha, h_bar).unwrap();
            let f = |x: f64| alpha_loss(&h, x, h_bar).unwrap().0;
            let fd = (f(log_alpha + FD_STEP) - f(log_alpha - FD_STEP)) / (2.0 * FD_STEP);
            let err = (fd - g).abs() / fd.abs().max(g.abs()).max(1e-8);
            (format!("alpha draw {draw}"), err)
        })
        .collect()
}
