//! Cart-pole balancing with the classic control constants (Euler integration).

use rand::Rng;
use rand_chacha::ChaCha8Rng;

const GRAVITY: f64 = 9.8;
const MASS_CART: f64 = 1.0;
const MASS_POLE: f64 = 0.1;
const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
// half the pole's length
const LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = MASS_POLE * LENGTH;
const FORCE_MAG: f64 = 10.0;
const TAU: f64 = 0.02;
const THETA_THRESHOLD: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;
const X_THRESHOLD: f64 = 2.4;

pub(crate) const OBS_DIM: usize = 4;
pub(crate) const ACTIONS: usize = 2;

/// `[x, x_dot, theta, theta_dot]`.
pub(crate) type State = [f64; 4];

pub(crate) fn reset(rng: &mut ChaCha8Rng) -> State {
    let mut s = [0.0; 4];
    for v in &mut s {
        *v = rng.gen_range(-0.05..0.05);
    }
    s
}

/// Returns the next state and whether the pole fell or the cart left the track.
pub(crate) fn step(s: &State, action: usize) -> (State, bool) {
    let [x, x_dot, theta, theta_dot] = *s;
    let force = if action == 1 { FORCE_MAG } else { -FORCE_MAG };
    let (sin, cos) = theta.sin_cos();
    let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin) / TOTAL_MASS;
    let theta_acc =
        (GRAVITY * sin - cos * temp) / (LENGTH * (4.0 / 3.0 - MASS_POLE * cos * cos / TOTAL_MASS));
    let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;

    let next = [
        x + TAU * x_dot,
        x_dot + TAU * x_acc,
        theta + TAU * theta_dot,
        theta_dot + TAU * theta_acc,
    ];
    let failed = next[0].abs() > X_THRESHOLD || next[2].abs() > THETA_THRESHOLD;
    (next, failed)
}

pub(crate) fn observe(s: &State, out: &mut Vec<f64>) {
    out.extend_from_slice(s);
}
