//! Convex regularizers on the probability simplex and their Bregman divergences.
//!
//! Every MDP regularizer `h` is a convex function of an action distribution.
//! The same functions serve as potentials for Bregman drift terms:
//!
//! ```text
//! B_h(p, q) = h(p) - h(q) - <grad h(q), p - q>
//! ```
//!
//! Closed forms are used for negative Tsallis entropy, `||.||_p^p` and `max`.
//! Negative Shannon entropy goes through the generic definition, which
//! reproduces `KL(p || q)` up to rounding.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to probabilities before `log` and negative powers.
pub const PROB_FLOOR: f64 = 1e-8;

/// Tolerance on `sum(p) == 1`.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// A point on the probability simplex over `n >= 2` actions.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    probs: Vec<f64>,
}

impl ActionDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::Precondition(format!(
                "action distribution needs at least 2 entries, got {}",
                probs.len()
            )));
        }
        let mut sum = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(Error::Precondition(format!(
                    "probability {i} = {p} outside [0, 1]"
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Precondition(format!(
                "probabilities sum to {sum}, not 1"
            )));
        }
        Ok(ActionDistribution { probs })
    }

    /// Numerically stable softmax of a logit vector.
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        if logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::Numerical("non-finite logit".into()));
        }
        let mut probs = logits.to_vec();
        softmax_in_place(&mut probs);
        ActionDistribution::new(probs)
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Precondition(format!(
                "action distribution needs at least 2 entries, got {n}"
            )));
        }
        Ok(ActionDistribution {
            probs: vec![1.0 / n as f64; n],
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }
}

impl AsRef<[f64]> for ActionDistribution {
    fn as_ref(&self) -> &[f64] {
        &self.probs
    }
}

/// In-place softmax with max-subtraction.
pub fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in z.iter_mut() {
        *v /= total;
    }
}

/// Convex MDP regularizer `h` (also used as a Bregman potential).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RegularizerSpec {
    /// `-H(p) = sum p log p`.
    NegShannon,
    /// `-H_m(p)`, negative Tsallis entropy with exponent `m > 0, m != 1`.
    NegTsallis { m: f64 },
    /// `||p||_p^p = sum p^p` with `p >= 1`; `p = 2` is the squared L2 norm.
    Lp { p: f64 },
    /// `max_x p(x)`.
    Max,
}

impl RegularizerSpec {
    pub fn neg_tsallis(m: f64) -> Result<Self> {
        let spec = RegularizerSpec::NegTsallis { m };
        spec.validate()?;
        Ok(spec)
    }

    pub fn lp(p: f64) -> Result<Self> {
        let spec = RegularizerSpec::Lp { p };
        spec.validate()?;
        Ok(spec)
    }

    pub const fn sq_l2() -> Self {
        RegularizerSpec::Lp { p: 2.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            RegularizerSpec::NegTsallis { m } if !(m.is_finite() && m > 0.0 && m != 1.0) => Err(
                Error::Config(format!("Tsallis exponent must be > 0 and != 1, got {m}")),
            ),
            RegularizerSpec::Lp { p } if !(p.is_finite() && p >= 1.0) => {
                Err(Error::Config(format!("Lp exponent must be >= 1, got {p}")))
            }
            _ => Ok(()),
        }
    }

    /// All regularizer families with the exponents used in the experiments.
    pub fn catalogue() -> Vec<RegularizerSpec> {
        vec![
            RegularizerSpec::NegShannon,
            RegularizerSpec::NegTsallis { m: 0.5 },
            RegularizerSpec::NegTsallis { m: 1.5 },
            RegularizerSpec::sq_l2(),
            RegularizerSpec::Max,
        ]
    }
}

impl fmt::Display for RegularizerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegularizerSpec::NegShannon => write!(f, "neg_shannon"),
            RegularizerSpec::NegTsallis { m } => write!(f, "neg_tsallis:{m}"),
            RegularizerSpec::Lp { p } if *p == 2.0 => write!(f, "l2"),
            RegularizerSpec::Lp { p } => write!(f, "lp:{p}"),
            RegularizerSpec::Max => write!(f, "max"),
        }
    }
}

impl FromStr for RegularizerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s.as_str(), None),
        };
        let number = |a: Option<&str>| -> Result<f64> {
            a.ok_or_else(|| Error::Config(format!("regularizer '{s}' needs an exponent")))?
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad exponent in '{s}': {e}")))
        };
        let spec = match name {
            "neg_shannon" | "shannon" | "entropy" => RegularizerSpec::NegShannon,
            "neg_tsallis" | "tsallis" => RegularizerSpec::NegTsallis { m: number(arg)? },
            "l2" | "sq_l2" => RegularizerSpec::sq_l2(),
            "lp" => RegularizerSpec::Lp { p: number(arg)? },
            "max" => RegularizerSpec::Max,
            _ => return Err(Error::Config(format!("unknown regularizer '{s}'"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl TryFrom<String> for RegularizerSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<RegularizerSpec> for String {
    fn from(spec: RegularizerSpec) -> String {
        spec.to_string()
    }
}

/// Drift regularizer `D(pi_new; pi_old)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DriftSpec {
    /// `KL(p_new || p_old)`.
    ReverseKL,
    /// `KL(p_old || p_new)`.
    ForwardKL,
    /// `B_h(p_new, p_old)`.
    Bregman(RegularizerSpec),
}

impl fmt::Display for DriftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DriftSpec::ReverseKL => write!(f, "rkl"),
            DriftSpec::ForwardKL => write!(f, "fkl"),
            DriftSpec::Bregman(h) => write!(f, "bregman:{h}"),
        }
    }
}

impl FromStr for DriftSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "rkl" | "kl" | "reverse_kl" => Ok(DriftSpec::ReverseKL),
            "fkl" | "forward_kl" => Ok(DriftSpec::ForwardKL),
            _ => match lower.split_once(':') {
                Some(("bregman", inner)) => Ok(DriftSpec::Bregman(inner.parse()?)),
                _ => Err(Error::Config(format!("unknown drift '{s}'"))),
            },
        }
    }
}

impl TryFrom<String> for DriftSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DriftSpec> for String {
    fn from(spec: DriftSpec) -> String {
        spec.to_string()
    }
}

#[inline]
fn floor(p: f64) -> f64 {
    p.max(PROB_FLOOR)
}

/// Lowest index among the maximizers of `p`.
pub fn argmax_lowest(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Shannon entropy `H(p)`.
pub fn shannon_entropy(p: &ActionDistribution) -> f64 {
    -p.probs().iter().map(|&x| x * floor(x).ln()).sum::<f64>()
}

/// Tsallis entropy `H_m(p) = (1/(m-1)) sum (p - p^m)` for `m != 1`.
pub fn tsallis_entropy(p: &ActionDistribution, m: f64) -> f64 {
    p.probs().iter().map(|&x| x - x.powf(m)).sum::<f64>() / (m - 1.0)
}

/// `h(p)` for the chosen regularizer.
pub fn h_value(spec: RegularizerSpec, p: &ActionDistribution) -> f64 {
    match spec {
        RegularizerSpec::NegShannon => -shannon_entropy(p),
        RegularizerSpec::NegTsallis { m } => -tsallis_entropy(p, m),
        RegularizerSpec::Lp { p: e } => p.probs().iter().map(|&x| x.powf(e)).sum(),
        RegularizerSpec::Max => p.probs()[argmax_lowest(p.probs())],
    }
}

/// An element of the subdifferential of `h` at `p`.
///
/// For `max` this is `e_j` at the lowest maximizing index.
pub fn h_subgradient(spec: RegularizerSpec, p: &ActionDistribution) -> Vec<f64> {
    let probs = p.probs();
    match spec {
        RegularizerSpec::NegShannon => probs.iter().map(|&x| floor(x).ln() + 1.0).collect(),
        RegularizerSpec::NegTsallis { m } => probs
            .iter()
            .map(|&x| {
                let base = if m < 1.0 { floor(x) } else { x };
                (m * base.powf(m - 1.0) - 1.0) / (m - 1.0)
            })
            .collect(),
        RegularizerSpec::Lp { p: e } => probs.iter().map(|&x| e * x.powf(e - 1.0)).collect(),
        RegularizerSpec::Max => {
            let mut g = vec![0.0; probs.len()];
            g[argmax_lowest(probs)] = 1.0;
            g
        }
    }
}

fn check_same_support(p: &ActionDistribution, q: &ActionDistribution) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::Precondition(format!(
            "distributions over {} and {} actions",
            p.len(),
            q.len()
        )));
    }
    Ok(())
}

/// Bregman divergence from the first-order remainder of `h` around `q`.
pub fn bregman_generic(
    potential: RegularizerSpec,
    p: &ActionDistribution,
    q: &ActionDistribution,
) -> Result<f64> {
    check_same_support(p, q)?;
    let grad = h_subgradient(potential, q);
    let inner: f64 = grad
        .iter()
        .zip(p.probs().iter().zip(q.probs()))
        .map(|(g, (a, b))| g * (a - b))
        .sum();
    Ok(h_value(potential, p) - h_value(potential, q) - inner)
}

/// `B_h(p, q)`, using closed forms where they exist.
pub fn bregman(
    potential: RegularizerSpec,
    p: &ActionDistribution,
    q: &ActionDistribution,
) -> Result<f64> {
    check_same_support(p, q)?;
    let (ps, qs) = (p.probs(), q.probs());
    let value = match potential {
        RegularizerSpec::NegShannon => return bregman_generic(potential, p, q),
        RegularizerSpec::NegTsallis { m } => {
            ps.iter()
                .zip(qs)
                .map(|(&a, &b)| {
                    let b_low = if m < 1.0 { floor(b) } else { b };
                    a.powf(m) - m * a * b_low.powf(m - 1.0) - (1.0 - m) * b.powf(m)
                })
                .sum::<f64>()
                / (m - 1.0)
        }
        RegularizerSpec::Lp { p: e } => ps
            .iter()
            .zip(qs)
            .map(|(&a, &b)| a.powf(e) - b.powf(e) - e * a * b.powf(e - 1.0) + e * b.powf(e))
            .sum(),
        RegularizerSpec::Max => {
            let j = argmax_lowest(qs);
            h_value(RegularizerSpec::Max, p) - qs[j] - (ps[j] - qs[j])
        }
    };
    Ok(value)
}

/// `KL(p || q)` with `0 log 0 = 0` and the probability floor on `q`.
pub fn kl_divergence(p: &ActionDistribution, q: &ActionDistribution) -> Result<f64> {
    check_same_support(p, q)?;
    Ok(p.probs()
        .iter()
        .zip(q.probs())
        .map(|(&a, &b)| a * (floor(a).ln() - floor(b).ln()))
        .sum())
}

/// Drift penalty between the candidate policy and the frozen previous one.
pub fn drift_value(
    spec: DriftSpec,
    p_new: &ActionDistribution,
    p_old: &ActionDistribution,
) -> Result<f64> {
    match spec {
        DriftSpec::ReverseKL => kl_divergence(p_new, p_old),
        DriftSpec::ForwardKL => kl_divergence(p_old, p_new),
        DriftSpec::Bregman(h) => bregman(h, p_new, p_old),
    }
}

/// Upper bound on `|h(p)|` over the simplex with `n` actions.
pub fn h_bound(spec: RegularizerSpec, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Precondition(format!(
            "bound needs at least 2 actions, got {n}"
        )));
    }
    spec.validate()?;
    Ok(match spec {
        RegularizerSpec::NegShannon => (n as f64).ln(),
        RegularizerSpec::NegTsallis { m } if m > 1.0 => 1.0 / (m - 1.0),
        RegularizerSpec::NegTsallis { m } => {
            // y^m - y peaks at y* = m^(1/(1-m)) on [0, 1]
            let y = m.powf(1.0 / (1.0 - m));
            n as f64 / (1.0 - m) * (y.powf(m) - y).abs()
        }
        RegularizerSpec::Lp { .. } | RegularizerSpec::Max => 1.0,
    })
}
