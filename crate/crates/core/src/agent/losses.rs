//! Critic, actor and temperature objectives, each evaluated on a fresh tape.

use super::replay::Batch;
use super::AgentConfig;
use crate::error::{Error, Result};
use crate::neural::{grad, Matrix, Mlp, PolicyHead, Tape, TwinCritic, Var};
use crate::regularizers::{
    h_subgradient, h_value, ActionDistribution, DriftSpec, RegularizerSpec, PROB_FLOOR,
};

/// `h` applied to each row of a probability matrix: `B x n -> B x 1`.
pub fn h_tape(tape: &mut Tape, spec: RegularizerSpec, probs: Var) -> Var {
    match spec {
        RegularizerSpec::NegShannon => {
            let floored = tape.clamp_min(probs, PROB_FLOOR);
            let logs = tape.ln(floored);
            let plogp = tape.mul(probs, logs);
            tape.sum_rows(plogp)
        }
        RegularizerSpec::NegTsallis { m } => {
            let base = if m < 1.0 {
                tape.clamp_min(probs, PROB_FLOOR)
            } else {
                probs
            };
            let pm = tape.powf(base, m);
            let diff = tape.sub(probs, pm);
            let s = tape.sum_rows(diff);
            tape.scale(s, -1.0 / (m - 1.0))
        }
        RegularizerSpec::Lp { p } => {
            let pp = tape.powf(probs, p);
            tape.sum_rows(pp)
        }
        RegularizerSpec::Max => tape.max_rows(probs),
    }
}

fn row_dist(row: ndarray::ArrayView1<f64>) -> Result<ActionDistribution> {
    ActionDistribution::new(row.to_vec())
}

/// `h` of each row of a probability matrix.
pub fn h_rows(spec: RegularizerSpec, probs: &Matrix) -> Result<Vec<f64>> {
    probs
        .rows()
        .into_iter()
        .map(|r| Ok(h_value(spec, &row_dist(r)?)))
        .collect()
}

/// `D(new, old)` per row with `old` fixed: `B x n -> B x 1`.
pub fn drift_tape(tape: &mut Tape, spec: DriftSpec, new: Var, old: &Matrix) -> Result<Var> {
    let log_old = old.mapv(|q| q.max(PROB_FLOOR).ln());
    Ok(match spec {
        DriftSpec::ReverseKL => {
            let floored = tape.clamp_min(new, PROB_FLOOR);
            let log_new = tape.ln(floored);
            let lo = tape.constant(log_old);
            let diff = tape.sub(log_new, lo);
            let terms = tape.mul(new, diff);
            tape.sum_rows(terms)
        }
        DriftSpec::ForwardKL => {
            let floored = tape.clamp_min(new, PROB_FLOOR);
            let log_new = tape.ln(floored);
            let lo = tape.constant(log_old);
            let diff = tape.sub(lo, log_new);
            let q = tape.constant(old.clone());
            let terms = tape.mul(q, diff);
            tape.sum_rows(terms)
        }
        DriftSpec::Bregman(potential) => {
            // h(p) - h(q) - <grad h(q), p - q>
            let mut h_old = Matrix::zeros((old.nrows(), 1));
            let mut g_old = Matrix::zeros(old.dim());
            for (r, row) in old.rows().into_iter().enumerate() {
                let q = row_dist(row)?;
                h_old[[r, 0]] = h_value(potential, &q);
                for (c, g) in h_subgradient(potential, &q).into_iter().enumerate() {
                    g_old[[r, c]] = g;
                }
            }
            let h_new = h_tape(tape, potential, new);
            let ho = tape.constant(h_old);
            let q = tape.constant(old.clone());
            let g = tape.constant(g_old);
            let step = tape.sub(new, q);
            let lin = tape.mul(g, step);
            let inner = tape.sum_rows(lin);
            let a = tape.sub(h_new, ho);
            tape.sub(a, inner)
        }
    })
}

fn check_batch(batch: &Batch) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Precondition("empty batch".into()));
    }
    Ok(())
}

/// Bellman targets `r + (1-d) [gamma * E_{a'~pi} min_i Q_targ,i(s',a') - alpha h(pi(s'))]`.
///
/// The `-alpha h` term is dropped when `use_regularized_q` is false.
pub fn critic_targets(
    config: &AgentConfig,
    critics: &TwinCritic,
    policy: &PolicyHead,
    batch: &Batch,
    alpha: f64,
) -> Result<Vec<f64>> {
    check_batch(batch)?;
    let next_probs = policy.probs(&batch.next_obs)?;
    let q_next = critics.min_target(&batch.next_obs)?;
    let h_next = if config.use_regularized_q && alpha != 0.0 {
        Some(h_rows(config.regularizer, &next_probs)?)
    } else {
        None
    };
    let mut y = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        let r = batch.rewards[i];
        if batch.dones[i] {
            y.push(r);
            continue;
        }
        let expected: f64 = next_probs
            .row(i)
            .iter()
            .zip(q_next.row(i))
            .map(|(p, q)| p * q)
            .sum();
        let mut boot = config.gamma * expected;
        if let Some(h) = &h_next {
            boot -= alpha * h[i];
        }
        y.push(r + boot);
    }
    Ok(y)
}

/// Sum over both online critics of the mean squared residual against fixed `targets`.
pub fn critic_loss_with_targets(
    critics: &TwinCritic,
    batch: &Batch,
    targets: &[f64],
) -> Result<(f64, [Vec<Matrix>; 2])> {
    check_batch(batch)?;
    if targets.len() != batch.len() {
        return Err(Error::Shape(format!(
            "{} targets for {} transitions",
            targets.len(),
            batch.len()
        )));
    }
    let y = Matrix::from_shape_vec((targets.len(), 1), targets.to_vec()).expect("sized");
    let nets: [&Mlp; 2] = [&critics.online[0], &critics.online[1]];
    let (value, mut grads) = grad(&nets, |tape, h| {
        let obs = tape.constant(batch.obs.clone());
        let yv = tape.constant(y);
        let mut total: Option<Var> = None;
        for (net, params) in nets.iter().zip(h) {
            let q = net.forward_tape(tape, params, obs)?;
            let qa = tape.gather(q, &batch.actions);
            let res = tape.sub(qa, yv);
            let sq = tape.square(res);
            let m = tape.mean(sq);
            total = Some(match total {
                Some(t) => tape.add(t, m),
                None => m,
            });
        }
        Ok(total.expect("two critics"))
    })?;
    let g1 = grads.pop().expect("two gradient sets");
    let g0 = grads.pop().expect("two gradient sets");
    Ok((value, [g0, g1]))
}

/// Critic objective and its gradients for both online critics.
pub fn critic_loss(
    config: &AgentConfig,
    critics: &TwinCritic,
    policy: &PolicyHead,
    batch: &Batch,
    alpha: f64,
) -> Result<(f64, [Vec<Matrix>; 2])> {
    let y = critic_targets(config, critics, policy, batch, alpha)?;
    critic_loss_with_targets(critics, batch, &y)
}

/// Per-term breakdown of the actor objective (batch means).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ActorTerms {
    pub total: f64,
    pub neg_q: f64,
    pub h: f64,
    pub drift: f64,
}

/// Mean over states of `sum_a pi(a|s) (-q_hat(s,a)) + alpha h(pi(s)) + lambda D(pi(s), old(s))`.
///
/// `q_hat` and `old_probs` are constants (`B x n`).
pub fn actor_loss(
    config: &AgentConfig,
    policy: &PolicyHead,
    obs: &Matrix,
    q_hat: &Matrix,
    old_probs: &Matrix,
    alpha: f64,
    lambda: f64,
) -> Result<(ActorTerms, Vec<Matrix>)> {
    if obs.nrows() == 0 {
        return Err(Error::Precondition("empty batch".into()));
    }
    let n = policy.action_count();
    for (name, m) in [("q_hat", q_hat), ("old_probs", old_probs)] {
        if m.dim() != (obs.nrows(), n) {
            return Err(Error::Shape(format!(
                "{name} is {:?}, expected {:?}",
                m.dim(),
                (obs.nrows(), n)
            )));
        }
    }
    let mut terms = ActorTerms::default();
    let (value, mut grads) = grad(&[&policy.net], |tape, h| {
        let x = tape.constant(obs.clone());
        let logits = policy.net.forward_tape(tape, &h[0], x)?;
        let p = tape.softmax_rows(logits);
        let neg_q = tape.constant(q_hat.mapv(|q| -q));
        let lin = tape.mul(p, neg_q);
        let mut per_state = tape.sum_rows(lin);
        terms.neg_q = tape.value(per_state).mean().unwrap_or(0.0);
        if alpha != 0.0 {
            let hv = h_tape(tape, config.regularizer, p);
            terms.h = tape.value(hv).mean().unwrap_or(0.0);
            let scaled = tape.scale(hv, alpha);
            per_state = tape.add(per_state, scaled);
        }
        if lambda != 0.0 {
            let dv = drift_tape(tape, config.drift, p, old_probs)?;
            terms.drift = tape.value(dv).mean().unwrap_or(0.0);
            let scaled = tape.scale(dv, lambda);
            per_state = tape.add(per_state, scaled);
        }
        Ok(tape.mean(per_state))
    })?;
    terms.total = value;
    Ok((terms, grads.pop().expect("one gradient set")))
}

/// `J(alpha) = mean_s[-alpha h(pi_k(s))] + alpha h_bar` with `alpha = exp(log_alpha)`.
///
/// `h_snapshot` holds `h` of the frozen policy per state. Returns `(J, dJ/dlog_alpha)`.
pub fn alpha_loss(h_snapshot: &[f64], log_alpha: f64, h_bar: f64) -> Result<(f64, f64)> {
    if h_snapshot.is_empty() {
        return Err(Error::Precondition("empty batch".into()));
    }
    let mut tape = Tape::new();
    let la = tape.param(Matrix::from_elem((1, 1), log_alpha));
    let alpha = tape.exp(la);
    let h = tape.constant(
        Matrix::from_shape_vec((h_snapshot.len(), 1), h_snapshot.to_vec()).expect("sized"),
    );
    let scaled = tape.mul_scalar(h, alpha);
    let neg = tape.scale(scaled, -1.0);
    let mean = tape.mean(neg);
    let target = tape.constant_scalar(h_bar);
    let bar = tape.mul(alpha, target);
    let j = tape.add(mean, bar);
    let value = tape.scalar_value(j);
    if !value.is_finite() {
        return Err(Error::Numerical(format!("alpha loss evaluated to {value}")));
    }
    let g = tape.backward(j)?;
    Ok((value, g.wrt(la)[[0, 0]]))
}
