//! Matrix-valued reverse-mode differentiation tape.
//!
//! Values are row-major `f64` matrices; a batch of `B` vectors is a `B x n`
//! matrix. Nodes are appended in evaluation order, so a single reverse sweep
//! over the node list accumulates every adjoint.

use ndarray::{Array2, Axis, Zip};

use crate::error::{Error, Result};

pub type Matrix = Array2<f64>;

/// `tanh` via one `exp`, with a series for small arguments.
///
/// About 2.5x faster than `f64::tanh`; relative error below 1e-13.
#[inline]
pub fn tanh(x: f64) -> f64 {
    let a = x.abs();
    if a < 0.01 {
        let x2 = x * x;
        x * (1.0 - x2 * (1.0 / 3.0 - x2 * (2.0 / 15.0 - x2 * (17.0 / 315.0))))
    } else {
        let e = (-2.0 * a).exp();
        ((1.0 - e) / (1.0 + e)).copysign(x)
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulScalar(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    Tanh(Var),
    Exp(Var),
    Ln(Var),
    Powf(Var, f64),
    Square(Var),
    ClampMin(Var, f64),
    SoftmaxRows(Var),
    SumRows(Var),
    Sum(Var),
    Mean(Var),
    Min(Var, Var),
    MaxRows(Var),
    Gather(Var, Vec<usize>),
}

struct Node {
    value: Matrix,
    op: Op,
    tracked: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros if `v` does not influence the output.
    pub fn wrt(&self, v: Var) -> Matrix {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Matrix::zeros(self.shapes[v.0]),
        }
    }

    pub fn take(&mut self, v: Var) -> Matrix {
        self.grads[v.0]
            .take()
            .unwrap_or_else(|| Matrix::zeros(self.shapes[v.0]))
    }
}

fn scalar(v: f64) -> Matrix {
    Matrix::from_elem((1, 1), v)
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].tracked)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    /// A differentiable input.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A constant; no gradient flows into it.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn constant_scalar(&mut self, v: f64) -> Var {
        self.constant(scalar(v))
    }

    fn check_same(&self, a: Var, b: Var, what: &str) {
        assert_eq!(
            self.value(a).dim(),
            self.value(b).dim(),
            "{what}: operand shapes differ"
        );
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        let t = self.tracked(&[a, b]);
        self.push(v, Op::MatMul(a, b), t)
    }

    /// `a + row`, broadcasting a `1 x n` row over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + self.value(row);
        let t = self.tracked(&[a, row]);
        self.push(v, Op::AddRow(a, row), t)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.check_same(a, b, "add");
        let v = self.value(a) + self.value(b);
        let t = self.tracked(&[a, b]);
        self.push(v, Op::Add(a, b), t)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.check_same(a, b, "sub");
        let v = self.value(a) - self.value(b);
        let t = self.tracked(&[a, b]);
        self.push(v, Op::Sub(a, b), t)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.check_same(a, b, "mul");
        let v = self.value(a) * self.value(b);
        let t = self.tracked(&[a, b]);
        self.push(v, Op::Mul(a, b), t)
    }

    /// `a * s` for a `1 x 1` node `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Var {
        assert_eq!(
            self.value(s).dim(),
            (1, 1),
            "mul_scalar expects a 1x1 factor"
        );
        let v = self.value(a) * self.scalar_value(s);
        let t = self.tracked(&[a, s]);
        self.push(v, Op::MulScalar(a, s), t)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        let t = self.tracked(&[a]);
        self.push(v, Op::Scale(a, c), t)
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) + c;
        let t = self.tracked(&[a]);
        self.push(v, Op::AddConst(a), t)
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let v = self.value(a).mapv(f);
        let t = self.tracked(&[a]);
        self.push(v, op, t)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), tanh)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, Op::Ln(a), f64::ln)
    }

    pub fn powf(&mut self, a: Var, e: f64) -> Var {
        self.unary(a, Op::Powf(a, e), |x| x.powf(e))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    /// `max(a, floor)`; the gradient is zero where the floor is active.
    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Var {
        self.unary(a, Op::ClampMin(a, floor), |x| x.max(floor))
    }

    /// Row-wise softmax, stabilized by subtracting each row's maximum.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for mut row in v.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            row.mapv_inplace(|x| (x - max).exp());
            let total = row.sum();
            row.mapv_inplace(|x| x / total);
        }
        let t = self.tracked(&[a]);
        self.push(v, Op::SoftmaxRows(a), t)
    }

    /// `B x n -> B x 1`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let t = self.tracked(&[a]);
        self.push(v, Op::SumRows(a), t)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = scalar(self.value(a).sum());
        let t = self.tracked(&[a]);
        self.push(v, Op::Sum(a), t)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let v = scalar(m.sum() / m.len() as f64);
        let t = self.tracked(&[a]);
        self.push(v, Op::Mean(a), t)
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        self.check_same(a, b, "min");
        let v = Zip::from(self.value(a))
            .and(self.value(b))
            .map_collect(|&x, &y| x.min(y));
        let t = self.tracked(&[a, b]);
        self.push(v, Op::Min(a, b), t)
    }

    /// Row maximum `B x n -> B x 1`; the subgradient picks the lowest maximizing column.
    pub fn max_rows(&mut self, a: Var) -> Var {
        let v = self
            .value(a)
            .map_axis(Axis(1), |row| row.fold(f64::NEG_INFINITY, |m, &x| m.max(x)))
            .insert_axis(Axis(1));
        let t = self.tracked(&[a]);
        self.push(v, Op::MaxRows(a), t)
    }

    /// Picks column `idx[i]` from row `i`: `B x n -> B x 1`.
    pub fn gather(&mut self, a: Var, idx: &[usize]) -> Var {
        let m = self.value(a);
        assert_eq!(m.nrows(), idx.len(), "gather: one index per row");
        let v = Matrix::from_shape_fn((idx.len(), 1), |(i, _)| m[[i, idx[i]]]);
        let t = self.tracked(&[a]);
        self.push(v, Op::Gather(a, idx.to_vec()), t)
    }

    /// Reverse sweep from a `1 x 1` output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out = self.value(output);
        if out.dim() != (1, 1) {
            return Err(Error::Shape(format!(
                "backward needs a scalar output, got {:?}",
                out.dim()
            )));
        }
        let n = output.0 + 1;
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(scalar(1.0));

        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.tracked {
                continue;
            }
            let y = &node.value;
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if self.nodes[a.0].tracked {
                        let ga = g.dot(&self.value(*b).t());
                        self.accumulate(&mut grads, *a, ga);
                    }
                    if self.nodes[b.0].tracked {
                        let gb = self.value(*a).t().dot(&g);
                        self.accumulate(&mut grads, *b, gb);
                    }
                }
                Op::AddRow(a, row) => {
                    if self.nodes[row.0].tracked {
                        let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                        self.accumulate(&mut grads, *row, gr);
                    }
                    self.accumulate(&mut grads, *a, g);
                }
                Op::Add(a, b) => {
                    if self.nodes[b.0].tracked {
                        self.accumulate(&mut grads, *b, g.clone());
                    }
                    self.accumulate(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    if self.nodes[b.0].tracked {
                        self.accumulate(&mut grads, *b, -&g);
                    }
                    self.accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    if self.nodes[a.0].tracked {
                        self.accumulate(&mut grads, *a, &g * self.value(*b));
                    }
                    if self.nodes[b.0].tracked {
                        self.accumulate(&mut grads, *b, &g * self.value(*a));
                    }
                }
                Op::MulScalar(a, s) => {
                    if self.nodes[s.0].tracked {
                        let gs = (&g * self.value(*a)).sum();
                        self.accumulate(&mut grads, *s, scalar(gs));
                    }
                    if self.nodes[a.0].tracked {
                        self.accumulate(&mut grads, *a, g * self.scalar_value(*s));
                    }
                }
                Op::Scale(a, c) => self.accumulate(&mut grads, *a, g * *c),
                Op::AddConst(a) => self.accumulate(&mut grads, *a, g),
                Op::Tanh(a) => {
                    let ga = Zip::from(&g).and(y).map_collect(|&g, &y| g * (1.0 - y * y));
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::Exp(a) => self.accumulate(&mut grads, *a, g * y),
                Op::Ln(a) => {
                    let ga = g / self.value(*a);
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::Powf(a, e) => {
                    let e = *e;
                    let ga = Zip::from(&g)
                        .and(self.value(*a))
                        .map_collect(|&g, &x| g * e * x.powf(e - 1.0));
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::Square(a) => {
                    let ga = Zip::from(&g)
                        .and(self.value(*a))
                        .map_collect(|&g, &x| 2.0 * g * x);
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::ClampMin(a, floor) => {
                    let ga = Zip::from(&g).and(self.value(*a)).map_collect(|&g, &x| {
                        if x > *floor {
                            g
                        } else {
                            0.0
                        }
                    });
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let mut ga = &g * y;
                    let dots = ga.sum_axis(Axis(1));
                    Zip::from(ga.rows_mut()).and(y.rows()).and(&dots).for_each(
                        |mut row, yrow, &d| {
                            row.zip_mut_with(&yrow, |v, &p| *v -= p * d);
                        },
                    );
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::SumRows(a) => {
                    let ga = Matrix::from_shape_fn(self.value(*a).dim(), |(r, _)| g[[r, 0]]);
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let ga = Matrix::from_elem(self.value(*a).dim(), g[[0, 0]]);
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::Mean(a) => {
                    let m = self.value(*a);
                    let ga = Matrix::from_elem(m.dim(), g[[0, 0]] / m.len() as f64);
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::Min(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    if self.nodes[a.0].tracked {
                        let ga =
                            Zip::from(&g)
                                .and(va)
                                .and(vb)
                                .map_collect(|&g, &x, &z| if x <= z { g } else { 0.0 });
                        self.accumulate(&mut grads, *a, ga);
                    }
                    if self.nodes[b.0].tracked {
                        let gb =
                            Zip::from(&g)
                                .and(va)
                                .and(vb)
                                .map_collect(|&g, &x, &z| if x <= z { 0.0 } else { g });
                        self.accumulate(&mut grads, *b, gb);
                    }
                }
                Op::MaxRows(a) => {
                    let m = self.value(*a);
                    let mut ga = Matrix::zeros(m.dim());
                    for (r, row) in m.rows().into_iter().enumerate() {
                        let mut j = 0;
                        for (c, &x) in row.iter().enumerate() {
                            if x > row[j] {
                                j = c;
                            }
                        }
                        ga[[r, j]] = g[[r, 0]];
                    }
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::Gather(a, idx) => {
                    let mut ga = Matrix::zeros(self.value(*a).dim());
                    for (r, &j) in idx.iter().enumerate() {
                        ga[[r, j]] = g[[r, 0]];
                    }
                    self.accumulate(&mut grads, *a, ga);
                }
            }
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.dim()).collect(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
        if !self.nodes[v.0].tracked {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => *acc += &g,
            slot @ None => *slot = Some(g),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn fast_tanh_matches_libm() {
        let mut worst: f64 = 0.0;
        for i in -200_000..=200_000 {
            let x = i as f64 * 1e-4;
            let (a, b) = (tanh(x), x.tanh());
            if b != 0.0 {
                worst = worst.max(((a - b) / b).abs());
            }
        }
        for x in [1e-300, 1e-12, 0.00999, 0.01, 50.0, 800.0, f64::INFINITY] {
            assert!(((tanh(x) - x.tanh()) / x.tanh()).abs() < 1e-13, "{x}");
            assert_eq!(tanh(-x), -tanh(x));
        }
        assert_eq!(tanh(0.0), 0.0);
        assert!(worst < 1e-13, "{worst}");
    }

    /// Central differences of `f` around `x`.
    fn numeric_grad(x: &Matrix, f: &dyn Fn(&Matrix) -> f64) -> Matrix {
        let h = 1e-6;
        let mut out = Matrix::zeros(x.dim());
        for idx in 0..x.len() {
            let (r, c) = (idx / x.ncols(), idx % x.ncols());
            let mut plus = x.clone();
            plus[[r, c]] += h;
            let mut minus = x.clone();
            minus[[r, c]] -= h;
            out[[r, c]] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
        out
    }

    fn check(x: Matrix, build: fn(&mut Tape, Var) -> Var) {
        let mut tape = Tape::new();
        let v = tape.param(x.clone());
        let out = build(&mut tape, v);
        let g = tape.backward(out).unwrap().wrt(v);
        let f = |m: &Matrix| {
            let mut t = Tape::new();
            let v = t.param(m.clone());
            let o = build(&mut t, v);
            t.scalar_value(o)
        };
        let fd = numeric_grad(&x, &f);
        for (a, b) in g.iter().zip(fd.iter()) {
            assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs()), "{g:?} vs {fd:?}");
        }
    }

    #[test]
    fn half_squared_norm_gradient_is_identity() {
        let x = array![[1.0, -2.0], [0.5, 3.0]];
        let mut tape = Tape::new();
        let v = tape.param(x.clone());
        let sq = tape.square(v);
        let s = tape.sum(sq);
        let half = tape.scale(s, 0.5);
        let g = tape.backward(half).unwrap().wrt(v);
        assert_eq!(g, x);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let mut tape = Tape::new();
        let v = tape.param(array![[1.0, 2.0]]);
        let c = tape.constant_scalar(3.0);
        let g = tape.backward(c).unwrap().wrt(v);
        assert_eq!(g, array![[0.0, 0.0]]);
    }

    #[test]
    fn elementwise_ops_match_finite_differences() {
        let x = array![[0.3, -0.7, 1.1], [0.9, 0.2, -0.4]];
        check(x.clone(), |t, v| {
            let a = t.tanh(v);
            let b = t.exp(a);
            let c = t.square(b);
            let d = t.mean(c);
            t.scale(d, 1.7)
        });
        check(x.clone(), |t, v| {
            let p = t.softmax_rows(v);
            let l = t.ln(p);
            let m = t.mul(p, l);
            let r = t.sum_rows(m);
            t.sum(r)
        });
        check(x.clone(), |t, v| {
            let p = t.softmax_rows(v);
            let c = t.clamp_min(p, 1e-8);
            let w = t.powf(c, 0.5);
            let s = t.add_const(w, 2.0);
            let m = t.max_rows(s);
            t.mean(m)
        });
        check(x, |t, v| {
            let p = t.softmax_rows(v);
            let g = t.gather(p, &[2, 0]);
            t.sum(g)
        });
    }

    #[test]
    fn binary_ops_match_finite_differences() {
        let x = array![[0.3, -0.7], [0.9, 0.2], [-1.0, 0.5]];
        check(x.clone(), |t, v| {
            let w = t.constant(array![[0.5, -1.0, 2.0], [1.5, 0.1, -0.3]]);
            let b = t.param(array![[0.1, 0.2, 0.3]]);
            let h = t.matmul(v, w);
            let h = t.add_row(h, b);
            let k = t.constant(Matrix::from_elem((3, 3), 0.25));
            let m = t.min(h, k);
            let q = t.sub(m, h);
            let q = t.add(q, h);
            let s = t.mean(q);
            let sq = t.square(s);
            t.add(sq, s)
        });
        check(array![[0.7]], |t, s| {
            let a = t.constant(array![[1.0, -2.0], [0.5, 0.25]]);
            let e = t.exp(s);
            let m = t.mul_scalar(a, e);
            t.sum(m)
        });
    }

    #[test]
    fn backward_requires_scalar_output() {
        let mut tape = Tape::new();
        let v = tape.param(array![[1.0, 2.0]]);
        assert!(tape.backward(v).is_err());
    }
}
