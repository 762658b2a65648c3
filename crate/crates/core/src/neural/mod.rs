//! Small MLPs, a reverse-mode tape over matrices, and Adam.

mod adam;
mod mlp;
pub mod tape;

pub use adam::{clip_global_norm, global_norm, Adam, AdamConfig};
pub use mlp::{
    Checkpoint, LayerBlob, Mlp, PolicyHead, TwinCritic, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use tape::{Gradients, Matrix, Tape, Var};

use crate::error::{Error, Result};

/// Evaluates `loss` on a fresh tape with `nets` registered as parameters and returns the
/// scalar loss plus one gradient list per network (ordered like [`Mlp::params`]).
pub fn grad<F>(nets: &[&Mlp], loss: F) -> Result<(f64, Vec<Vec<Matrix>>)>
where
    F: FnOnce(&mut Tape, &[Vec<Var>]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let handles: Vec<Vec<Var>> = nets.iter().map(|n| n.register(&mut tape)).collect();
    let out = loss(&mut tape, &handles)?;
    let value = tape.scalar_value(out);
    if !value.is_finite() {
        return Err(Error::Numerical(format!("loss evaluated to {value}")));
    }
    let mut g = tape.backward(out)?;
    let grads = handles
        .iter()
        .map(|hs| hs.iter().map(|&v| g.take(v)).collect())
        .collect();
    Ok((value, grads))
}

/// Hidden-layer gain for orthogonal initialization.
pub const HIDDEN_GAIN: f64 = std::f64::consts::SQRT_2;
/// Output gain for policy logits.
pub const POLICY_OUTPUT_GAIN: f64 = 0.01;
/// Output gain for Q heads.
pub const CRITIC_OUTPUT_GAIN: f64 = 1.0;

/// `[input, hidden..., output]` layer sizes.
pub fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend_from_slice(hidden);
    s.push(output);
    s
}
