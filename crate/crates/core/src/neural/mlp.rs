use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::tape::{Matrix, Tape, Var};
use crate::error::{Error, Result};
use crate::regularizers::ActionDistribution;

/// Fully connected network with `tanh` hidden units and a linear output layer.
///
/// Weights are stored `fan_in x fan_out` so a batch `X` (`B x fan_in`) maps to `X W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Matrix>,
}

/// Orthogonal `rows x cols` matrix scaled by `gain` (Gram-Schmidt on a Gaussian draw).
fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Matrix {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let mut a = Matrix::from_shape_fn((tall, short), |_| rng.sample::<f64, _>(StandardNormal));
    for j in 0..short {
        for k in 0..j {
            let dot: f64 = (0..tall).map(|i| a[[i, j]] * a[[i, k]]).sum();
            for i in 0..tall {
                a[[i, j]] -= dot * a[[i, k]];
            }
        }
        let norm: f64 = (0..tall).map(|i| a[[i, j]] * a[[i, j]]).sum::<f64>().sqrt();
        for i in 0..tall {
            a[[i, j]] /= norm;
        }
    }
    let q = if rows >= cols { a } else { a.reversed_axes() };
    q.as_standard_layout().to_owned() * gain
}

impl Mlp {
    /// All-zero parameters.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        let weights = sizes
            .windows(2)
            .map(|w| Matrix::zeros((w[0], w[1])))
            .collect();
        let biases = sizes[1..].iter().map(|&n| Matrix::zeros((1, n))).collect();
        Ok(Mlp {
            sizes: sizes.to_vec(),
            weights,
            biases,
        })
    }

    /// Orthogonal weights with `hidden_gain` on hidden layers and `output_gain` on the last; zero biases.
    pub fn orthogonal<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden_gain: f64,
        output_gain: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Mlp::zeros(sizes)?;
        let last = net.weights.len() - 1;
        for (l, w) in net.weights.iter_mut().enumerate() {
            let gain = if l == last { output_gain } else { hidden_gain };
            *w = orthogonal(w.nrows(), w.ncols(), gain, rng);
        }
        Ok(net)
    }

    pub fn from_parts(weights: Vec<Matrix>, biases: Vec<Matrix>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::Shape("need one bias per weight matrix".into()));
        }
        let mut sizes = vec![weights[0].nrows()];
        for (w, b) in weights.iter().zip(&biases) {
            if w.nrows() != *sizes.last().unwrap() || b.dim() != (1, w.ncols()) {
                return Err(Error::Shape(format!(
                    "layer {:?} with bias {:?} does not chain",
                    w.dim(),
                    b.dim()
                )));
            }
            sizes.push(w.ncols());
        }
        let net = Mlp {
            sizes,
            weights,
            biases,
        };
        if !net.is_finite() {
            return Err(Error::Numerical("non-finite parameter".into()));
        }
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Matrix] {
        &self.biases
    }

    pub fn num_params(&self) -> usize {
        self.params().map(|m| m.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|m| m.iter().all(|v| v.is_finite()))
    }

    /// Parameter matrices in the order `w0, b0, w1, b1, ...`.
    pub fn params(&self) -> impl Iterator<Item = &Matrix> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w, b])
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Matrix> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.sizes == other.sizes
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {cols} features, network expects {}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Batched forward pass.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x.ncols())?;
        let last = self.weights.len() - 1;
        let mut h = x.dot(&self.weights[0]) + &self.biases[0];
        for l in 1..=last {
            h.mapv_inplace(super::tape::tanh);
            h = h.dot(&self.weights[l]) + &self.biases[l];
        }
        Ok(h)
    }

    /// Records the parameters on `tape` as differentiable leaves.
    pub fn register(&self, tape: &mut Tape) -> Vec<Var> {
        self.params().map(|m| tape.param(m.clone())).collect()
    }

    /// Forward pass on the tape with parameters previously registered by [`Mlp::register`].
    pub fn forward_tape(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var> {
        self.check_input(tape.value(x).ncols())?;
        if params.len() != 2 * self.weights.len() {
            return Err(Error::Shape(format!(
                "expected {} parameter handles, got {}",
                2 * self.weights.len(),
                params.len()
            )));
        }
        let mut h = x;
        for (l, pair) in params.chunks(2).enumerate() {
            if l > 0 {
                h = tape.tanh(h);
            }
            let z = tape.matmul(h, pair[0]);
            h = tape.add_row(z, pair[1]);
        }
        Ok(h)
    }

    /// Elementwise `target <- tau * target + (1 - tau) * online`.
    pub fn polyak_update(&mut self, online: &Mlp, tau: f64) -> Result<()> {
        if !self.same_shape(online) {
            return Err(Error::Shape(format!(
                "target {:?} vs online {:?}",
                self.sizes, online.sizes
            )));
        }
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::Config(format!("tau must lie in [0, 1], got {tau}")));
        }
        for (t, o) in self.params_mut().zip(online.params()) {
            t.zip_mut_with(o, |t, &o| *t = tau * *t + (1.0 - tau) * o);
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            sizes: self.sizes.clone(),
            layers: self
                .weights
                .iter()
                .zip(&self.biases)
                .map(|(w, b)| LayerBlob {
                    rows: w.nrows(),
                    cols: w.ncols(),
                    weight: w.iter().copied().collect(),
                    bias: b.iter().copied().collect(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for layer in &ckpt.layers {
            let w = Array2::from_shape_vec((layer.rows, layer.cols), layer.weight.clone())
                .map_err(|e| Error::Shape(e.to_string()))?;
            let b = Array2::from_shape_vec((1, layer.cols), layer.bias.clone())
                .map_err(|e| Error::Shape(e.to_string()))?;
            weights.push(w);
            biases.push(b);
        }
        let net = Mlp::from_parts(weights, biases)?;
        if net.sizes != ckpt.sizes {
            return Err(Error::Shape(format!(
                "checkpoint sizes {:?} disagree with layers {:?}",
                ckpt.sizes, net.sizes
            )));
        }
        Ok(net)
    }
}

pub const CHECKPOINT_FORMAT: &str = "pmdlab-mlp";
pub const CHECKPOINT_VERSION: u32 = 1;

/// JSON checkpoint: layer sizes plus row-major weight (`fan_in x fan_out`) and bias arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub sizes: Vec<usize>,
    pub layers: Vec<LayerBlob>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerBlob {
    pub rows: usize,
    pub cols: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Softmax policy over a finite action set.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyHead {
    pub net: Mlp,
}

impl PolicyHead {
    pub fn new(net: Mlp) -> Self {
        PolicyHead { net }
    }

    pub fn action_count(&self) -> usize {
        self.net.output_dim()
    }

    /// Row-wise action probabilities for a batch of observations.
    pub fn probs(&self, obs: &Matrix) -> Result<Matrix> {
        let mut logits = self.net.forward(obs)?;
        for mut row in logits.rows_mut() {
            let slice = row
                .as_slice_mut()
                .expect("forward output is in standard layout");
            crate::regularizers::softmax_in_place(slice);
        }
        Ok(logits)
    }

    pub fn dist(&self, obs: &[f64]) -> Result<ActionDistribution> {
        let x = Matrix::from_shape_vec((1, obs.len()), obs.to_vec())
            .map_err(|e| Error::Shape(e.to_string()))?;
        let p = self.probs(&x)?;
        ActionDistribution::new(p.row(0).to_vec())
    }
}

/// Two online Q networks with their target copies.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinCritic {
    pub online: [Mlp; 2],
    pub target: [Mlp; 2],
}

impl TwinCritic {
    pub fn new(q1: Mlp, q2: Mlp) -> Result<Self> {
        if !q1.same_shape(&q2) {
            return Err(Error::Shape("twin critics must share a shape".into()));
        }
        Ok(TwinCritic {
            target: [q1.clone(), q2.clone()],
            online: [q1, q2],
        })
    }

    /// `min(Q1, Q2)` of the online networks, `B x actions`.
    pub fn min_online(&self, obs: &Matrix) -> Result<Matrix> {
        let a = self.online[0].forward(obs)?;
        let b = self.online[1].forward(obs)?;
        Ok(ndarray::Zip::from(&a)
            .and(&b)
            .map_collect(|&x, &y| x.min(y)))
    }

    /// `min(Q1_target, Q2_target)`, `B x actions`.
    pub fn min_target(&self, obs: &Matrix) -> Result<Matrix> {
        let a = self.target[0].forward(obs)?;
        let b = self.target[1].forward(obs)?;
        Ok(ndarray::Zip::from(&a)
            .and(&b)
            .map_collect(|&x, &y| x.min(y)))
    }

    pub fn polyak_update(&mut self, tau: f64) -> Result<()> {
        for (t, o) in self.target.iter_mut().zip(&self.online) {
            t.polyak_update(o, tau)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_gives_uniform_policy() {
        let head = PolicyHead::new(Mlp::zeros(&[4, 8, 8, 3]).unwrap());
        let d = head.dist(&[0.3, -1.0, 2.0, 0.1]).unwrap();
        for p in d.probs() {
            assert_abs_diff_eq!(*p, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn softmax_of_fixed_logits() {
        // single linear layer with bias = desired logits
        let w = Matrix::zeros((1, 2));
        let head = |b: Matrix| PolicyHead::new(Mlp::from_parts(vec![w.clone()], vec![b]).unwrap());
        let d = head(array![[3.0f64.ln(), 0.0]]).dist(&[1.0]).unwrap();
        assert_abs_diff_eq!(d.probs()[0], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(d.probs()[1], 0.25, epsilon = 1e-15);
        for z in [-700.0, 0.0, 42.0, 800.0] {
            let d = head(array![[z, z]]).dist(&[1.0]).unwrap();
            assert_eq!(d.probs(), &[0.5, 0.5]);
        }
    }

    #[test]
    fn orthogonal_init_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::orthogonal(&[4, 64, 64, 2], 2f64.sqrt(), 0.01, &mut rng).unwrap();
        let w = &net.weights()[1];
        let gram = w.t().dot(w);
        for i in 0..64 {
            for j in 0..64 {
                let expected = if i == j { 2.0 } else { 0.0 };
                assert_abs_diff_eq!(gram[[i, j]], expected, epsilon = 1e-10);
            }
        }
        // wide first layer has orthonormal rows
        let w0 = &net.weights()[0];
        let gram0 = w0.dot(&w0.t());
        assert_abs_diff_eq!(gram0[[1, 1]], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(gram0[[0, 1]], 0.0, epsilon = 1e-10);
        assert!(net.biases().iter().all(|b| b.iter().all(|&v| v == 0.0)));

        let mut rng2 = ChaCha8Rng::seed_from_u64(3);
        let again = Mlp::orthogonal(&[4, 64, 64, 2], 2f64.sqrt(), 0.01, &mut rng2).unwrap();
        assert_eq!(net, again);
    }

    #[test]
    fn tape_forward_matches_plain_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Mlp::orthogonal(&[3, 7, 5, 2], 1.0, 1.0, &mut rng).unwrap();
        let x = Matrix::from_shape_fn((4, 3), |(i, j)| (i as f64 - j as f64) * 0.3);
        let mut tape = Tape::new();
        let params = net.register(&mut tape);
        let xv = tape.constant(x.clone());
        let out = net.forward_tape(&mut tape, &params, xv).unwrap();
        let plain = net.forward(&x).unwrap();
        for (a, b) in tape.value(out).iter().zip(plain.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        assert!(net.forward(&Matrix::zeros((1, 4))).is_err());
    }

    #[test]
    fn polyak_examples() {
        let one = |v: f64| Mlp::from_parts(vec![array![[v]]], vec![array![[v]]]).unwrap();
        let mut t = one(1.0);
        t.polyak_update(&one(0.0), 1.0).unwrap();
        assert_eq!(t, one(1.0));
        t.polyak_update(&one(0.0), 0.0).unwrap();
        assert_eq!(t, one(0.0));
        let mut t = one(1.0);
        t.polyak_update(&one(0.0), 0.95).unwrap();
        assert_abs_diff_eq!(t.weights()[0][[0, 0]], 0.95, epsilon = 1e-15);
        assert!(t.polyak_update(&Mlp::zeros(&[2, 1]).unwrap(), 0.5).is_err());
    }

    #[test]
    fn polyak_contracts_toward_online() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let online = Mlp::orthogonal(&[3, 6, 2], 1.0, 1.0, &mut rng).unwrap();
        let mut target = Mlp::orthogonal(&[3, 6, 2], 1.0, 1.0, &mut rng).unwrap();
        let before: Vec<f64> = target
            .params()
            .zip(online.params())
            .flat_map(|(t, o)| (t - o).into_iter())
            .collect();
        target.polyak_update(&online, 0.95).unwrap();
        let after: Vec<f64> = target
            .params()
            .zip(online.params())
            .flat_map(|(t, o)| (t - o).into_iter())
            .collect();
        for (b, a) in before.iter().zip(&after) {
            assert_abs_diff_eq!(*a, 0.95 * b, epsilon = 1e-14);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::orthogonal(&[4, 5, 3], 1.0, 0.01, &mut rng).unwrap();
        let json = serde_json::to_string(&net.to_checkpoint()).unwrap();
        let back: Checkpoint = serde_json::from_str(&json).unwrap();
        assert_eq!(Mlp::from_checkpoint(&back).unwrap(), net);
        let mut bad = back.clone();
        bad.version = 99;
        assert!(Mlp::from_checkpoint(&bad).is_err());
    }
}
