//! Reverse-mode automatic differentiation over 2-D `f64` matrices.
//!
//! A [`Graph`] records operations on [`Var`] handles as they are evaluated.
//! Trainable tensors live in a [`ParamStore`] that the graph borrows, so
//! building a graph never copies weights. [`Graph::backward`] returns a
//! [`Grads`] holding one gradient per touched parameter.

use std::collections::HashMap;

use ndarray::{s, Array2, Axis, Zip};

pub type Mat = Array2<f64>;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named trainable tensors, in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Mat>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor. Panics if the name is taken.
    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        self.index.insert(name.clone(), self.values.len());
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    /// Ids whose name starts with `prefix`.
    pub fn ids_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = ParamId> + 'a {
        self.ids().filter(move |&id| self.names[id.0].starts_with(prefix))
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Gradients indexed by parameter; parameters the loss did not reach are
/// `None`.
#[derive(Debug, Clone)]
pub struct Grads(Vec<Option<Mat>>);

impl Grads {
    pub fn empty(n: usize) -> Self {
        Grads(vec![None; n])
    }

    pub fn get(&self, id: ParamId) -> Option<&Mat> {
        self.0.get(id.0).and_then(Option::as_ref)
    }

    fn slot(&mut self, id: ParamId, shape: (usize, usize)) -> &mut Mat {
        if self.0.len() <= id.0 {
            self.0.resize(id.0 + 1, None);
        }
        self.0[id.0].get_or_insert_with(|| Mat::zeros(shape))
    }

    /// Adds `scale * other` into self.
    pub fn add_scaled(&mut self, other: &Grads, scale: f64) {
        for (i, g) in other.0.iter().enumerate() {
            if let Some(g) = g {
                self.slot(ParamId(i), g.dim()).scaled_add(scale, g);
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().flatten().all(|g| g.iter().all(|x| x.is_finite()))
    }

    pub fn global_norm(&self) -> f64 {
        self.0.iter().flatten().map(|g| g.iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, c: f64) {
        for g in self.0.iter_mut().flatten() {
            g.mapv_inplace(|x| x * c);
        }
    }
}

/// Handle to a value recorded in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Const,
    Param(ParamId),
    Gather(ParamId, Vec<usize>),
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    Exp(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Mat, inv_std: Vec<f64> },
    Softmax(Var),
    LogSoftmax(Var),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SumAll(Var),
    Pick(Var, Vec<(usize, usize)>),
    Minimum(Var, Var),
    Clamp(Var, f64, f64),
}

struct Node {
    op: Op,
    /// Empty for `Param` nodes; their value is read from the store.
    value: Mat,
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self { params, nodes: Vec::new() }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Mat {
        match &self.nodes[v.0].op {
            Op::Param(id) => self.params.get(*id),
            _ => &self.nodes[v.0].value,
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[[0, 0]]
    }

    fn push(&mut self, op: Op, value: Mat) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(Op::Const, value)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.push(Op::Param(id), Mat::zeros((0, 0)))
    }

    /// Rows `rows` of a parameter matrix (embedding lookup).
    pub fn gather(&mut self, id: ParamId, rows: &[usize]) -> Var {
        let table = self.params.get(id);
        let mut out = Mat::zeros((rows.len(), table.ncols()));
        for (i, &r) in rows.iter().enumerate() {
            out.row_mut(i).assign(&table.row(r));
        }
        self.push(Op::Gather(id, rows.to_vec()), out)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(Op::MatMul(a, b), v)
    }

    /// `a · bᵀ`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        self.push(Op::MatMulBt(a, b), v)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(Op::Mul(a, b), v)
    }

    /// Adds a `[1, n]` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + self.value(row);
        self.push(Op::AddRow(a, row), v)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.push(Op::Scale(a, c), v)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(gelu);
        self.push(Op::Gelu(a), v)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::exp);
        self.push(Op::Exp(a), v)
    }

    /// Row-wise layer normalization with `[1, n]` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let n = xv.ncols() as f64;
        let mut xhat = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            row.mapv_inplace(|v| (v - mean) * inv);
            inv_std.push(inv);
        }
        let out = &xhat * self.value(gamma) + self.value(beta);
        self.push(Op::LayerNorm { x, gamma, beta, xhat, inv_std }, out)
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for mut row in v.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            row.mapv_inplace(|x| (x - m).exp());
            let z = row.sum();
            row.mapv_inplace(|x| x / z);
        }
        self.push(Op::Softmax(a), v)
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for mut row in v.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            row.mapv_inplace(|x| x - lse);
        }
        self.push(Op::LogSoftmax(a), v)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![start..start + len, ..]).to_owned();
        self.push(Op::SliceRows(a, start), v)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![.., start..start + len]).to_owned();
        self.push(Op::SliceCols(a, start), v)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("column counts agree");
        self.push(Op::ConcatRows(parts.to_vec()), v)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        self.push(Op::ConcatCols(parts.to_vec()), v)
    }

    /// Sum of all entries, as a `[1, 1]` value.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = Mat::from_elem((1, 1), self.value(a).sum());
        self.push(Op::SumAll(a), v)
    }

    /// Mean of all entries, as a `[1, 1]` value.
    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    /// Column vector `[k, 1]` of the entries at `(row, col)` pairs.
    pub fn pick(&mut self, a: Var, at: &[(usize, usize)]) -> Var {
        let src = self.value(a);
        let v = Mat::from_shape_fn((at.len(), 1), |(i, _)| src[at[i]]);
        self.push(Op::Pick(a, at.to_vec()), v)
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        Zip::from(&mut v).and(self.value(b)).for_each(|x, &y| *x = x.min(y));
        self.push(Op::Minimum(a, b), v)
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).mapv(|x| x.clamp(lo, hi));
        self.push(Op::Clamp(a, lo, hi), v)
    }

    /// Gradients of the `[1, 1]` value `loss` with respect to every
    /// parameter reachable from it.
    pub fn backward(&self, loss: Var) -> Grads {
        assert_eq!(self.value(loss).dim(), (1, 1), "loss must be a scalar");
        let mut grads: Vec<Option<Mat>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Mat::ones((1, 1)));
        let mut out = Grads::empty(self.params.len());
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(i, g, &mut grads, &mut out);
        }
        out
    }

    fn backward_node(&self, i: usize, g: Mat, grads: &mut [Option<Mat>], out: &mut Grads) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Const => {}
            Op::Param(id) => {
                let slot = out.slot(*id, g.dim());
                *slot += &g;
            }
            Op::Gather(id, rows) => {
                let slot = out.slot(*id, self.params.get(*id).dim());
                for (k, &r) in rows.iter().enumerate() {
                    let mut dst = slot.row_mut(r);
                    dst += &g.row(k);
                }
            }
            Op::MatMul(a, b) => {
                let da = g.dot(&self.value(*b).t());
                let db = self.value(*a).t().dot(&g);
                acc(grads, *a, da);
                acc(grads, *b, db);
            }
            Op::MatMulBt(a, b) => {
                let da = g.dot(self.value(*b));
                let db = g.t().dot(self.value(*a));
                acc(grads, *a, da);
                acc(grads, *b, db);
            }
            Op::Add(a, b) => {
                acc_ref(grads, *a, &g);
                acc(grads, *b, g);
            }
            Op::Sub(a, b) => {
                acc_ref(grads, *a, &g);
                acc(grads, *b, -g);
            }
            Op::Mul(a, b) => {
                let da = &g * self.value(*b);
                let db = &g * self.value(*a);
                acc(grads, *a, da);
                acc(grads, *b, db);
            }
            Op::AddRow(a, row) => {
                let dr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                acc(grads, *row, dr);
                acc(grads, *a, g);
            }
            Op::Scale(a, c) => acc(grads, *a, g * *c),
            Op::Gelu(a) => {
                let mut d = g;
                Zip::from(&mut d).and(self.value(*a)).for_each(|d, &x| *d *= gelu_grad(x));
                acc(grads, *a, d);
            }
            Op::Exp(a) => acc(grads, *a, g * &node.value),
            Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                let gam = self.value(*gamma);
                let dgamma = (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                let dbeta = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                let n = g.ncols() as f64;
                let mut dx = &g * gam;
                for ((mut row, xh), &inv) in dx.rows_mut().into_iter().zip(xhat.rows()).zip(inv_std) {
                    let sum = row.sum();
                    let dot = row.dot(&xh);
                    Zip::from(&mut row).and(&xh).for_each(|d, &h| *d = inv * (*d - sum / n - h * dot / n));
                }
                acc(grads, *gamma, dgamma);
                acc(grads, *beta, dbeta);
                acc(grads, *x, dx);
            }
            Op::Softmax(a) => {
                let y = &node.value;
                let mut d = &g * y;
                for (mut row, yr) in d.rows_mut().into_iter().zip(y.rows()) {
                    let s = row.sum();
                    Zip::from(&mut row).and(&yr).for_each(|d, &p| *d -= p * s);
                }
                acc(grads, *a, d);
            }
            Op::LogSoftmax(a) => {
                let y = &node.value;
                let mut d = g;
                for (mut row, yr) in d.rows_mut().into_iter().zip(y.rows()) {
                    let s = row.sum();
                    Zip::from(&mut row).and(&yr).for_each(|d, &ly| *d -= ly.exp() * s);
                }
                acc(grads, *a, d);
            }
            Op::SliceRows(a, start) => {
                let (rows, cols) = self.value(*a).dim();
                let slot = grad_slot(grads, *a, (rows, cols));
                let mut dst = slot.slice_mut(s![*start..*start + g.nrows(), ..]);
                dst += &g;
            }
            Op::SliceCols(a, start) => {
                let (rows, cols) = self.value(*a).dim();
                let slot = grad_slot(grads, *a, (rows, cols));
                let mut dst = slot.slice_mut(s![.., *start..*start + g.ncols()]);
                dst += &g;
            }
            Op::ConcatRows(parts) => {
                let mut at = 0;
                for &p in parts {
                    let n = self.value(p).nrows();
                    acc(grads, p, g.slice(s![at..at + n, ..]).to_owned());
                    at += n;
                }
            }
            Op::ConcatCols(parts) => {
                let mut at = 0;
                for &p in parts {
                    let n = self.value(p).ncols();
                    acc(grads, p, g.slice(s![.., at..at + n]).to_owned());
                    at += n;
                }
            }
            Op::SumAll(a) => {
                let d = Mat::from_elem(self.value(*a).dim(), g[[0, 0]]);
                acc(grads, *a, d);
            }
            Op::Pick(a, at) => {
                let slot = grad_slot(grads, *a, self.value(*a).dim());
                for (k, &(r, c)) in at.iter().enumerate() {
                    slot[[r, c]] += g[[k, 0]];
                }
            }
            Op::Minimum(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let mut da = g.clone();
                let mut db = g;
                Zip::from(&mut da).and(&mut db).and(av).and(bv).for_each(|da, db, &x, &y| {
                    if x <= y {
                        *db = 0.0;
                    } else {
                        *da = 0.0;
                    }
                });
                acc(grads, *a, da);
                acc(grads, *b, db);
            }
            Op::Clamp(a, lo, hi) => {
                let mut d = g;
                Zip::from(&mut d).and(self.value(*a)).for_each(|d, &x| {
                    if x < *lo || x > *hi {
                        *d = 0.0;
                    }
                });
                acc(grads, *a, d);
            }
        }
    }
}

fn grad_slot(grads: &mut [Option<Mat>], v: Var, shape: (usize, usize)) -> &mut Mat {
    grads[v.0].get_or_insert_with(|| Mat::zeros(shape))
}

fn acc(grads: &mut [Option<Mat>], v: Var, d: Mat) {
    match &mut grads[v.0] {
        Some(g) => *g += &d,
        slot => *slot = Some(d),
    }
}

fn acc_ref(grads: &mut [Option<Mat>], v: Var, d: &Mat) {
    match &mut grads[v.0] {
        Some(g) => *g += d,
        slot => *slot = Some(d.clone()),
    }
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_C: f64 = 0.044715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_K * (x + GELU_C * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_K * (x + GELU_C * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_K * (1.0 + 3.0 * GELU_C * x * x)
}
