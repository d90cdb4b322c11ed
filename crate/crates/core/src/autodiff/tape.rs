use std::sync::Arc;

use ndarray::{s, Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::spectral::LinearOperator;

/// Variance floor inside layer normalisation.
pub const LAYER_NORM_EPS: f64 = 1e-6;

/// Handle to a recorded node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Apply(Arc<dyn LinearOperator>, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRowBias(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Softplus(Var),
    Sigmoid(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Array2<f64>,
        inv_std: Array1<f64>,
    },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    MeanOf(Vec<Var>),
    MeanRows(Var),
    RowDot(Var, Var),
    L2NormalizeRows {
        x: Var,
        inv_norm: Array1<f64>,
    },
    LogSigmoid(Var),
    LogSumExpRows(Var),
    GatherRows(Var, Arc<Vec<usize>>),
    ElemMul(Var, Var),
    ScaleRows(Var, Var),
    Sum(Var),
}

impl Op {
    fn tag(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::MatMulT(..) => "matmul_t",
            Op::Apply(..) => "sparse_apply",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::AddRowBias(..) => "add_row_bias",
            Op::Scale(..) => "scale",
            Op::Relu(_) => "relu",
            Op::Softplus(_) => "softplus",
            Op::Sigmoid(_) => "sigmoid",
            Op::LayerNorm { .. } => "layer_norm",
            Op::ConcatRows(_) => "concat_rows",
            Op::ConcatCols(_) => "concat_cols",
            Op::MeanOf(_) => "mean_of",
            Op::MeanRows(_) => "mean_rows",
            Op::RowDot(..) => "row_dot",
            Op::L2NormalizeRows { .. } => "l2_normalize_rows",
            Op::LogSigmoid(_) => "log_sigmoid",
            Op::LogSumExpRows(_) => "logsumexp_rows",
            Op::GatherRows(..) => "gather_rows",
            Op::ElemMul(..) => "elementwise_mul",
            Op::ScaleRows(..) => "scale_rows",
            Op::Sum(_) => "sum",
        }
    }
}

/// Names of every differentiable op kind, as reported by `gradcheck`.
pub const OP_KINDS: &[&str] = &[
    "matmul",
    "matmul_t",
    "sparse_apply",
    "add",
    "sub",
    "add_row_bias",
    "scale",
    "relu",
    "softplus",
    "sigmoid",
    "layer_norm",
    "concat_rows",
    "concat_cols",
    "mean_of",
    "mean_rows",
    "row_dot",
    "l2_normalize_rows",
    "log_sigmoid",
    "logsumexp_rows",
    "gather_rows",
    "elementwise_mul",
    "scale_rows",
    "sum",
];

#[derive(Debug)]
struct Node {
    op: Op,
    value: Array2<f64>,
}

/// Eagerly evaluated record of dense matrix operations. Nodes are appended in
/// evaluation order, so the recording order is a topological order.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, Var)>,
    fault: Option<&'static str>,
}

fn stable_softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn shape_err(op: &str, detail: String) -> Error {
    Error::Shape(format!("{op}: {detail}"))
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Test hook: scales the adjoint of every node of kind `tag` by 1.5 so a
    /// gradient check can be shown to catch a broken rule.
    pub fn inject_fault(&mut self, tag: &'static str) {
        self.fault = Some(tag);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Array2<f64>) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    /// An input node (constant or parameter) with no name.
    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(Op::Leaf, value)
    }

    /// A named parameter leaf; listed by [`Gradients::named`].
    pub fn param(&mut self, name: impl Into<String>, value: Array2<f64>) -> Var {
        let v = self.leaf(value);
        self.params.push((name.into(), v));
        v
    }

    pub fn params(&self) -> &[(String, Var)] {
        &self.params
    }

    fn same_shape(&self, op: &str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let ((_, k1), (k2, _)) = (self.shape(a), self.shape(b));
        if k1 != k2 {
            return Err(shape_err("matmul", format!("{:?} x {:?}", self.shape(a), self.shape(b))));
        }
        let value = self.value(a).dot(self.value(b));
        Ok(self.push(Op::MatMul(a, b), value))
    }

    /// `a b^T`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let ((_, k1), (_, k2)) = (self.shape(a), self.shape(b));
        if k1 != k2 {
            return Err(shape_err("matmul_t", format!("{:?} x {:?}^T", self.shape(a), self.shape(b))));
        }
        let value = self.value(a).dot(&self.value(b).t());
        Ok(self.push(Op::MatMulT(a, b), value))
    }

    /// Multiplies by a fixed operator; the operator itself is not
    /// differentiated.
    pub fn sparse_apply(&mut self, op: Arc<dyn LinearOperator>, x: Var) -> Result<Var> {
        op.check_input(self.shape(x).0)?;
        let value = op.apply(self.value(x).view());
        Ok(self.push(Op::Apply(op, x), value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.value(a) + self.value(b);
        Ok(self.push(Op::Add(a, b), value))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a) - self.value(b);
        Ok(self.push(Op::Sub(a, b), value))
    }

    /// `x + 1 b` for a `1 x d` bias row.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let ((_, d), (one, db)) = (self.shape(x), self.shape(bias));
        if one != 1 || d != db {
            return Err(shape_err("add_row_bias", format!("{:?} + {:?}", self.shape(x), self.shape(bias))));
        }
        let value = self.value(x) + self.value(bias);
        Ok(self.push(Op::AddRowBias(x, bias), value))
    }

    pub fn scale(&mut self, x: Var, alpha: f64) -> Var {
        let value = self.value(x) * alpha;
        self.push(Op::Scale(x, alpha), value)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(|v| v.max(0.0));
        self.push(Op::Relu(x), value)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(stable_softplus);
        self.push(Op::Softplus(x), value)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(sigmoid);
        self.push(Op::Sigmoid(x), value)
    }

    /// Row-wise layer normalisation with `1 x d` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (_, d) = self.shape(x);
        for p in [gain, bias] {
            if self.shape(p) != (1, d) {
                return Err(shape_err("layer_norm", format!("affine {:?} for width {d}", self.shape(p))));
            }
        }
        let xv = self.value(x);
        let mean = xv.mean_axis(Axis(1)).expect("non-empty width");
        let centered = xv - &mean.view().insert_axis(Axis(1));
        let var = centered.mapv(|v| v * v).mean_axis(Axis(1)).expect("non-empty width");
        let inv_std = var.mapv(|v| 1.0 / (v + LAYER_NORM_EPS).sqrt());
        let xhat = centered * inv_std.view().insert_axis(Axis(1));
        let value = &xhat * self.value(gain) + self.value(bias);
        Ok(self.push(
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            value,
        ))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let d = parts.first().map(|&p| self.shape(p).1).ok_or_else(|| shape_err("concat_rows", "no inputs".into()))?;
        if parts.iter().any(|&p| self.shape(p).1 != d) {
            return Err(shape_err("concat_rows", "column counts differ".into()));
        }
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(0), &views).expect("checked widths");
        Ok(self.push(Op::ConcatRows(parts.to_vec()), value))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let n = parts.first().map(|&p| self.shape(p).0).ok_or_else(|| shape_err("concat_cols", "no inputs".into()))?;
        if parts.iter().any(|&p| self.shape(p).0 != n) {
            return Err(shape_err("concat_cols", "row counts differ".into()));
        }
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("checked heights");
        Ok(self.push(Op::ConcatCols(parts.to_vec()), value))
    }

    /// Elementwise mean of equally shaped matrices.
    pub fn mean_of(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| shape_err("mean_of", "no inputs".into()))?;
        let mut value = self.value(first).clone();
        for &p in &parts[1..] {
            self.same_shape("mean_of", first, p)?;
            value += self.value(p);
        }
        value /= parts.len() as f64;
        Ok(self.push(Op::MeanOf(parts.to_vec()), value))
    }

    /// Column means as a `1 x d` row.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let (n, d) = self.shape(x);
        if n == 0 {
            return Err(shape_err("mean_rows", "no rows".into()));
        }
        let value = self.value(x).mean_axis(Axis(0)).expect("rows").into_shape_with_order((1, d)).expect("shape");
        Ok(self.push(Op::MeanRows(x), value))
    }

    /// Per-row inner products as an `n x 1` column.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("row_dot", a, b)?;
        let prod = self.value(a) * self.value(b);
        let value = prod.sum_axis(Axis(1)).insert_axis(Axis(1));
        Ok(self.push(Op::RowDot(a, b), value))
    }

    /// Scales each row to unit norm; all-zero rows stay zero.
    pub fn l2_normalize_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let inv_norm = xv.map_axis(Axis(1), |r| {
            let n = r.dot(&r).sqrt();
            if n > 0.0 {
                1.0 / n
            } else {
                0.0
            }
        });
        let value = xv * &inv_norm.view().insert_axis(Axis(1));
        self.push(Op::L2NormalizeRows { x, inv_norm }, value)
    }

    pub fn log_sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(|v| -stable_softplus(-v));
        self.push(Op::LogSigmoid(x), value)
    }

    /// Max-shifted `log sum exp` of each row, as an `n x 1` column.
    pub fn logsumexp_rows(&mut self, x: Var) -> Result<Var> {
        if self.shape(x).1 == 0 {
            return Err(shape_err("logsumexp_rows", "no columns".into()));
        }
        let value = self
            .value(x)
            .map_axis(Axis(1), |r| {
                let m = r.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                m + r.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
            })
            .insert_axis(Axis(1));
        Ok(self.push(Op::LogSumExpRows(x), value))
    }

    pub fn gather_rows(&mut self, x: Var, idx: Arc<Vec<usize>>) -> Result<Var> {
        let n = self.shape(x).0;
        if let Some(bad) = idx.iter().find(|&&i| i >= n) {
            return Err(shape_err("gather_rows", format!("row {bad} of {n}")));
        }
        let value = self.value(x).select(Axis(0), &idx);
        Ok(self.push(Op::GatherRows(x, idx), value))
    }

    pub fn elementwise_mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("elementwise_mul", a, b)?;
        let value = self.value(a) * self.value(b);
        Ok(self.push(Op::ElemMul(a, b), value))
    }

    /// `diag(v) x` for an `n x 1` column `v`.
    pub fn scale_rows(&mut self, x: Var, v: Var) -> Result<Var> {
        let ((n, _), (nv, one)) = (self.shape(x), self.shape(v));
        if n != nv || one != 1 {
            return Err(shape_err("scale_rows", format!("{:?} by {:?}", self.shape(x), self.shape(v))));
        }
        let value = self.value(x) * self.value(v);
        Ok(self.push(Op::ScaleRows(x, v), value))
    }

    /// Sum of all entries as a `1 x 1` matrix.
    pub fn sum(&mut self, x: Var) -> Var {
        let value = Array2::from_elem((1, 1), self.value(x).sum());
        self.push(Op::Sum(x), value)
    }

    /// Mean of all entries.
    pub fn mean(&mut self, x: Var) -> Var {
        let len = self.value(x).len().max(1) as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / len)
    }

    /// Reverse sweep from a `1 x 1` loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::Shape(format!("loss must be scalar, got {:?}", self.shape(loss))));
        }
        let mut grads: Vec<Option<Array2<f64>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Array2::ones((1, 1)));

        fn acc(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(mut g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
                continue;
            }
            if self.fault == Some(node.op.tag()) {
                g *= 1.5;
            }
            let val = |v: Var| &self.nodes[v.0].value;
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    acc(&mut grads, *a, g.dot(&val(*b).t()));
                    acc(&mut grads, *b, val(*a).t().dot(&g));
                }
                Op::MatMulT(a, b) => {
                    acc(&mut grads, *a, g.dot(val(*b)));
                    acc(&mut grads, *b, g.t().dot(val(*a)));
                }
                Op::Apply(op, x) => acc(&mut grads, *x, op.apply_adjoint(g.view())),
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, -&g);
                    acc(&mut grads, *a, g);
                }
                Op::AddRowBias(x, b) => {
                    acc(&mut grads, *b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, *x, g);
                }
                Op::Scale(x, alpha) => acc(&mut grads, *x, g * *alpha),
                Op::Relu(x) => {
                    g.zip_mut_with(val(*x), |gi, &xi| {
                        if xi <= 0.0 {
                            *gi = 0.0
                        }
                    });
                    acc(&mut grads, *x, g);
                }
                Op::Softplus(x) => {
                    g.zip_mut_with(val(*x), |gi, &xi| *gi *= sigmoid(xi));
                    acc(&mut grads, *x, g);
                }
                Op::Sigmoid(x) => {
                    g.zip_mut_with(&node.value, |gi, &yi| *gi *= yi * (1.0 - yi));
                    acc(&mut grads, *x, g);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    acc(&mut grads, *bias, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, *gain, (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                    let dxhat = &g * val(*gain);
                    let m1 = dxhat.mean_axis(Axis(1)).expect("width").insert_axis(Axis(1));
                    let m2 = (&dxhat * xhat).mean_axis(Axis(1)).expect("width").insert_axis(Axis(1));
                    let dx = (dxhat - &m1 - xhat * &m2) * inv_std.view().insert_axis(Axis(1));
                    acc(&mut grads, *x, dx);
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let n = self.shape(p).0;
                        acc(&mut grads, p, g.slice(s![start..start + n, ..]).to_owned());
                        start += n;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let d = self.shape(p).1;
                        acc(&mut grads, p, g.slice(s![.., start..start + d]).to_owned());
                        start += d;
                    }
                }
                Op::MeanOf(parts) => {
                    let share = g / parts.len() as f64;
                    for &p in parts {
                        acc(&mut grads, p, share.clone());
                    }
                }
                Op::MeanRows(x) => {
                    let (n, d) = self.shape(*x);
                    let row = g / n as f64;
                    acc(&mut grads, *x, row.broadcast((n, d)).expect("1 x d").to_owned());
                }
                Op::RowDot(a, b) => {
                    acc(&mut grads, *a, val(*b) * &g);
                    acc(&mut grads, *b, val(*a) * &g);
                }
                Op::L2NormalizeRows { x, inv_norm } => {
                    let y = &node.value;
                    let proj = (y * &g).sum_axis(Axis(1)).insert_axis(Axis(1));
                    let dx = (&g - &(y * &proj)) * inv_norm.view().insert_axis(Axis(1));
                    acc(&mut grads, *x, dx);
                }
                Op::LogSigmoid(x) => {
                    g.zip_mut_with(val(*x), |gi, &xi| *gi *= sigmoid(-xi));
                    acc(&mut grads, *x, g);
                }
                Op::LogSumExpRows(x) => {
                    let soft = (val(*x) - &node.value).mapv(f64::exp);
                    acc(&mut grads, *x, soft * &g);
                }
                Op::GatherRows(x, idx) => {
                    let mut dx = Array2::zeros(self.shape(*x));
                    for (r, &i) in idx.iter().enumerate() {
                        let mut row = dx.row_mut(i);
                        row += &g.row(r);
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::ElemMul(a, b) => {
                    acc(&mut grads, *a, val(*b) * &g);
                    acc(&mut grads, *b, val(*a) * &g);
                }
                Op::ScaleRows(x, v) => {
                    let dv = (val(*x) * &g).sum_axis(Axis(1)).insert_axis(Axis(1));
                    acc(&mut grads, *v, dv);
                    acc(&mut grads, *x, g * val(*v));
                }
                Op::Sum(x) => {
                    let shape = self.shape(*x);
                    acc(&mut grads, *x, Array2::from_elem(shape, g[[0, 0]]));
                }
            }
        }

        let shapes = self.nodes.iter().map(|n| n.value.dim()).collect();
        Ok(Gradients {
            grads,
            shapes,
            params: self.params.clone(),
        })
    }
}

/// Leaf gradients from one reverse sweep.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
    shapes: Vec<(usize, usize)>,
    params: Vec<(String, Var)>,
}

impl Gradients {
    /// Gradient of `v`; zeros when the loss does not depend on it.
    pub fn get(&self, v: Var) -> Array2<f64> {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Array2::zeros(self.shapes[v.0]))
    }

    /// Takes ownership of a gradient without copying.
    pub fn take(&mut self, v: Var) -> Array2<f64> {
        self.grads[v.0]
            .take()
            .unwrap_or_else(|| Array2::zeros(self.shapes[v.0]))
    }

    pub fn named(mut self) -> Vec<(String, Array2<f64>)> {
        let params = std::mem::take(&mut self.params);
        params.into_iter().map(|(n, v)| (n, self.take(v))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn layer_norm_of_constant_row_is_zero() {
        let mut t = Tape::new();
        let x = t.leaf(array![[1.0, 1.0, 1.0]]);
        let g = t.leaf(Array2::ones((1, 3)));
        let b = t.leaf(Array2::zeros((1, 3)));
        let y = t.layer_norm(x, g, b).unwrap();
        assert_eq!(t.value(y), &array![[0.0, 0.0, 0.0]]);
    }

    #[test]
    fn relu_and_row_dot() {
        let mut t = Tape::new();
        let x = t.leaf(array![[-1.0, 2.0]]);
        let y = t.relu(x);
        assert_eq!(t.value(y), &array![[0.0, 2.0]]);
        let a = t.leaf(array![[1.0, 2.0]]);
        let b = t.leaf(array![[3.0, 4.0]]);
        let d = t.row_dot(a, b).unwrap();
        assert_eq!(t.value(d), &array![[11.0]]);
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut t = Tape::new();
        let x = t.param("x", array![[1.0, 2.0], [3.0, 4.0]]);
        let l = t.sum(x);
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(x), Array2::<f64>::ones((2, 2)));
    }

    #[test]
    fn unrelated_leaf_gets_zero_gradient() {
        let mut t = Tape::new();
        let x = t.param("x", array![[1.0]]);
        let y = t.param("y", array![[5.0, 6.0]]);
        let l = t.sum(x);
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(y), Array2::<f64>::zeros((1, 2)));
    }

    #[test]
    fn squared_norm_of_linear_map() {
        // d/dW ||W x||^2 = 2 (W x) x^T ; d/dx = 2 W^T W x
        let w0 = array![[1.0, -2.0], [0.5, 3.0]];
        let x0 = array![[2.0], [-1.0]];
        let mut t = Tape::new();
        let w = t.param("w", w0.clone());
        let x = t.param("x", x0.clone());
        let wx = t.matmul(w, x).unwrap();
        let sq = t.elementwise_mul(wx, wx).unwrap();
        let l = t.sum(sq);
        let g = t.backward(l).unwrap();
        let wxv = w0.dot(&x0);
        assert_eq!(g.get(x), w0.t().dot(&wxv) * 2.0);
        assert_eq!(g.get(w), wxv.dot(&x0.t()) * 2.0);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut t = Tape::new();
        let x = t.leaf(array![[1.0, 2.0]]);
        assert!(matches!(t.backward(x), Err(Error::Shape(_))));
    }

    #[test]
    fn shape_mismatch_is_error() {
        let mut t = Tape::new();
        let a = t.leaf(Array2::zeros((2, 3)));
        let b = t.leaf(Array2::zeros((2, 2)));
        assert!(t.matmul(a, b).is_err());
        assert!(t.add(a, b).is_err());
        assert!(t.row_dot(a, b).is_err());
        assert!(t.gather_rows(a, Arc::new(vec![2])).is_err());
    }

    #[test]
    fn log_sigmoid_is_overflow_safe() {
        let mut t = Tape::new();
        let x = t.leaf(array![[1000.0, -1000.0, 0.0]]);
        let y = t.log_sigmoid(x);
        let v = t.value(y);
        assert_eq!(v[[0, 0]], 0.0);
        assert_eq!(v[[0, 1]], -1000.0);
        assert!((v[[0, 2]] + std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn adjoints_are_linear() {
        // backward(a f + b g) = a grad f + b grad g on a shared leaf
        let x0 = array![[0.3, -1.2, 0.7], [2.0, 0.1, -0.4]];
        let build = |t: &mut Tape, x: Var| -> (Var, Var) {
            let r = t.relu(x);
            let f = t.sum(r);
            let n = t.l2_normalize_rows(x);
            let ls = t.logsumexp_rows(n).unwrap();
            let g = t.sum(ls);
            (f, g)
        };
        let grad_of = |a: f64, b: f64| {
            let mut t = Tape::new();
            let x = t.param("x", x0.clone());
            let (f, g) = build(&mut t, x);
            let fa = t.scale(f, a);
            let gb = t.scale(g, b);
            let l = t.add(fa, gb).unwrap();
            t.backward(l).unwrap().get(x)
        };
        let combined = grad_of(2.0, -3.0);
        let separate = grad_of(1.0, 0.0) * 2.0 + grad_of(0.0, 1.0) * -3.0;
        assert!((&combined - &separate).iter().all(|v| v.abs() < 1e-10));
    }
}
