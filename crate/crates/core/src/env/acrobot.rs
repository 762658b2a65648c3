//! Two-link acrobot swing-up, "book" dynamics integrated with one RK4 step per action.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

const DT: f64 = 0.2;
const LINK_LENGTH_1: f64 = 1.0;
const LINK_MASS_1: f64 = 1.0;
const LINK_MASS_2: f64 = 1.0;
const LINK_COM_POS_1: f64 = 0.5;
const LINK_COM_POS_2: f64 = 0.5;
const LINK_MOI: f64 = 1.0;
const MAX_VEL_1: f64 = 4.0 * PI;
const MAX_VEL_2: f64 = 9.0 * PI;
const TORQUES: [f64; 3] = [-1.0, 0.0, 1.0];
const GRAVITY: f64 = 9.8;

pub(crate) const OBS_DIM: usize = 6;
pub(crate) const ACTIONS: usize = 3;

/// `[theta1, theta2, dtheta1, dtheta2]`.
pub(crate) type State = [f64; 4];

pub(crate) fn reset(rng: &mut ChaCha8Rng) -> State {
    let mut s = [0.0; 4];
    for v in &mut s {
        *v = rng.gen_range(-0.1..0.1);
    }
    s
}

fn dsdt(s: &[f64; 5]) -> [f64; 5] {
    let (m1, m2) = (LINK_MASS_1, LINK_MASS_2);
    let (l1, lc1, lc2) = (LINK_LENGTH_1, LINK_COM_POS_1, LINK_COM_POS_2);
    let (i1, i2) = (LINK_MOI, LINK_MOI);
    let [theta1, theta2, dtheta1, dtheta2, a] = *s;

    let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * theta2.cos()) + i1 + i2;
    let d2 = m2 * (lc2 * lc2 + l1 * lc2 * theta2.cos()) + i2;
    let phi2 = m2 * lc2 * GRAVITY * (theta1 + theta2 - PI / 2.0).cos();
    let phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * theta2.sin()
        - 2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * theta2.sin()
        + (m1 * lc1 + m2 * l1) * GRAVITY * (theta1 - PI / 2.0).cos()
        + phi2;
    let ddtheta2 = (a + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 * dtheta1 * theta2.sin() - phi2)
        / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
    let ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
    [dtheta1, dtheta2, ddtheta1, ddtheta2, 0.0]
}

fn axpy(y: &[f64; 5], h: f64, k: &[f64; 5]) -> [f64; 5] {
    let mut out = *y;
    for (o, v) in out.iter_mut().zip(k) {
        *o += h * v;
    }
    out
}

fn rk4(y0: &[f64; 5]) -> [f64; 5] {
    let half = DT / 2.0;
    let k1 = dsdt(y0);
    let k2 = dsdt(&axpy(y0, half, &k1));
    let k3 = dsdt(&axpy(y0, half, &k2));
    let k4 = dsdt(&axpy(y0, DT, &k3));
    let mut out = *y0;
    for i in 0..5 {
        out[i] += DT / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

fn wrap(mut x: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    while x > hi {
        x -= span;
    }
    while x < lo {
        x += span;
    }
    x
}

/// Returns the next state and whether the tip swung above the goal line.
pub(crate) fn step(s: &State, action: usize) -> (State, bool) {
    let augmented = [s[0], s[1], s[2], s[3], TORQUES[action]];
    let ns = rk4(&augmented);
    let next = [
        wrap(ns[0], -PI, PI),
        wrap(ns[1], -PI, PI),
        ns[2].clamp(-MAX_VEL_1, MAX_VEL_1),
        ns[3].clamp(-MAX_VEL_2, MAX_VEL_2),
    ];
    let reached = -next[0].cos() - (next[1] + next[0]).cos() > 1.0;
    (next, reached)
}

pub(crate) fn observe(s: &State, out: &mut Vec<f64>) {
    out.extend_from_slice(&[s[0].cos(), s[0].sin(), s[1].cos(), s[1].sin(), s[2], s[3]]);
}
