//! Reverse-mode differentiation over a recorded tape of matrix operations.
//!
//! A [`Graph`] borrows a [`ParamStore`] immutably and records every forward
//! operation. [`Graph::backward`] walks the tape in reverse and adds the
//! parameter gradients into a [`Gradients`] buffer, so repeated calls
//! accumulate until the buffer is zeroed.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names.iter().zip(&self.values).enumerate().map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Total trainable scalars.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Flattened copy of every parameter, in registration order.
    pub fn flatten(&self) -> Vec<f64> {
        self.values.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    /// Replaces every value from named tensors, checking names and shapes.
    pub fn load_named(&mut self, tensors: &[(String, Tensor)]) -> Result<()> {
        if tensors.len() != self.values.len() {
            return Err(Error::Architecture(alloc::format!(
                "expected {} tensors, found {}",
                self.values.len(),
                tensors.len()
            )));
        }
        for (name, t) in tensors {
            let id = self
                .find(name)
                .ok_or_else(|| Error::Architecture(alloc::format!("unknown parameter `{name}`")))?;
            if self.values[id.0].shape() != t.shape() {
                return Err(Error::Architecture(alloc::format!(
                    "`{name}` has shape {:?}, architecture expects {:?}",
                    t.shape(),
                    self.values[id.0].shape()
                )));
            }
            self.values[id.0] = t.clone();
        }
        Ok(())
    }
}

/// Gradient accumulator aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self { grads: store.values.iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect() }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn zero(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(0.0));
    }

    pub fn global_norm(&self) -> f64 {
        libm::sqrt(self.grads.iter().map(Tensor::sq_norm).sum())
    }

    pub fn scale(&mut self, k: f64) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|x| *x *= k);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().all(Tensor::all_finite)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.grads.iter()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.grads.iter().flat_map(|t| t.data().iter().copied()).collect()
    }
}

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Elu(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Abs(Var),
    Square(Var),
    RowNorm(Var),
    Sum(Var),
    Mean(Var),
    SumCols(Var),
    Clamp(Var, f64, f64),
    Min(Var, Var),
    ConcatRows(Vec<Var>),
    GaussianLogProb { mean: Var, log_std: Var, actions: Tensor },
    GaussianEntropy(Var),
}

struct Node {
    /// `None` for parameter nodes, whose value lives in the store.
    value: Option<Tensor>,
    op: Op,
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

fn shape_err(context: &'static str, expected: usize, found: usize) -> Error {
    Error::Shape { context, expected, found }
}

const HALF_LN_TAU: f64 = 0.918_938_533_204_672_7;

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self { params, nodes: Vec::new() }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.params
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.get(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value: Some(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node { value: None, op: Op::Param(id) });
        Var(self.nodes.len() - 1)
    }

    /// Parameters reachable from `v` through the recorded operations.
    pub fn params_reaching(&self, v: Var) -> Vec<ParamId> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![v.0];
        let mut out = Vec::new();
        while let Some(i) = stack.pop() {
            if seen[i] {
                continue;
            }
            seen[i] = true;
            match &self.nodes[i].op {
                Op::Param(id) => out.push(*id),
                op => stack.extend(inputs(op).into_iter().map(|x| x.0)),
            }
        }
        out.sort();
        out
    }

    /// Whether `target` is an ancestor of `v` on the tape.
    pub fn depends_on(&self, v: Var, target: Var) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![v.0];
        while let Some(i) = stack.pop() {
            if i == target.0 {
                return true;
            }
            if seen[i] {
                continue;
            }
            seen[i] = true;
            stack.extend(inputs(&self.nodes[i].op).into_iter().map(|x| x.0));
        }
        false
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.value(a).matmul(self.value(b))?;
        Ok(self.push(t, Op::MatMul(a, b)))
    }

    /// `a + bias` with a `1 x m` bias broadcast over rows.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(bias));
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(shape_err("row broadcast", av.cols(), bv.len()));
        }
        let mut out = av.clone();
        let m = av.cols();
        for (i, x) in out.data_mut().iter_mut().enumerate() {
            *x += bv.data()[i % m];
        }
        Ok(self.push(out, Op::AddRow(a, bias)))
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err("elementwise operands", av.len(), bv.len()));
        }
        let out = av.zip_map(bv, f);
        Ok(self.push(out, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn min(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Min(a, b), |x, y| if x <= y { x } else { y })
    }

    /// Multiplies each row of `a` (`n x m`) by the matching entry of `col` (`n x 1`).
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (av, cv) = (self.value(a), self.value(col));
        if cv.cols() != 1 || cv.rows() != av.rows() {
            return Err(shape_err("column broadcast", av.rows(), cv.len()));
        }
        let m = av.cols();
        let mut out = av.clone();
        for (i, x) in out.data_mut().iter_mut().enumerate() {
            *x *= cv.data()[i / m];
        }
        Ok(self.push(out, Op::MulCol(a, col)))
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let out = self.value(a).map(f);
        self.push(out, op)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.unary(a, Op::Scale(a, k), |x| k * x)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        self.unary(a, Op::AddScalar(a), |x| x + k)
    }

    pub fn elu(&mut self, a: Var, alpha: f64) -> Var {
        self.unary(a, Op::Elu(a, alpha), |x| elu(x, alpha))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), libm::tanh)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), libm::exp)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, Op::Abs(a), libm::fabs)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, Op::Clamp(a, lo, hi), |x| x.clamp(lo, hi))
    }

    /// Euclidean norm of each row, `n x 1`.
    pub fn row_norm(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let norms: Vec<f64> =
            (0..av.rows()).map(|r| libm::sqrt(av.row_slice(r).iter().map(|x| x * x).sum())).collect();
        self.push(Tensor::column(&norms), Op::RowNorm(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let m = av.sum() / av.len().max(1) as f64;
        self.push(Tensor::scalar(m), Op::Mean(a))
    }

    /// Row sums, `n x 1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let sums: Vec<f64> = (0..av.rows()).map(|r| av.row_slice(r).iter().sum()).collect();
        self.push(Tensor::column(&sums), Op::SumCols(a))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = parts.first().map_or(0, |p| self.value(*p).cols());
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let t = self.value(*p);
            if t.cols() != cols {
                return Err(shape_err("concat columns", cols, t.cols()));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let out = Tensor::from_vec(rows, cols, data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    /// Log-density of `actions` under `N(mean, exp(log_std)^2)` summed over
    /// action dimensions; returns `n x 1`.
    pub fn gaussian_log_prob(&mut self, mean: Var, log_std: Var, actions: Tensor) -> Result<Var> {
        let (mv, lv) = (self.value(mean), self.value(log_std));
        if mv.shape() != actions.shape() {
            return Err(shape_err("actions vs mean", mv.len(), actions.len()));
        }
        if lv.rows() != 1 || lv.cols() != mv.cols() {
            return Err(shape_err("log std", mv.cols(), lv.len()));
        }
        let m = mv.cols();
        let mut out = vec![0.0; mv.rows()];
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for c in 0..m {
                let ls = lv.data()[c];
                let z = (actions.get(r, c) - mv.get(r, c)) * libm::exp(-ls);
                acc += -0.5 * z * z - ls - HALF_LN_TAU;
            }
            *o = acc;
        }
        Ok(self.push(Tensor::column(&out), Op::GaussianLogProb { mean, log_std, actions }))
    }

    /// Differential entropy of the diagonal Gaussian, scalar.
    pub fn gaussian_entropy(&mut self, log_std: Var) -> Var {
        let lv = self.value(log_std);
        let h = lv.data().iter().map(|ls| ls + 0.5 + HALF_LN_TAU).sum();
        self.push(Tensor::scalar(h), Op::GaussianEntropy(log_std))
    }

    /// Accumulates `d loss / d param` into `grads`.
    pub fn backward(&self, loss: Var, grads: &mut Gradients) -> Result<()> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::NonScalarLoss { len: lv.len() });
        }
        if grads.grads.len() != self.params.len() {
            return Err(Error::Architecture(String::from("gradient buffer does not match parameter store")));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            let y = node.value.as_ref();
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => grads.grads[id.0].add_assign(&g),
                Op::MatMul(a, b) => {
                    let da = g.matmul_t(self.value(*b));
                    let db = self.value(*a).t_matmul(&g);
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *b, db);
                }
                Op::AddRow(a, bias) => {
                    let m = g.cols();
                    let mut db = vec![0.0; m];
                    for (k, x) in g.data().iter().enumerate() {
                        db[k % m] += x;
                    }
                    accumulate(&mut adj, *bias, Tensor::row(&db));
                    accumulate(&mut adj, *a, g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *b, g.clone());
                    accumulate(&mut adj, *a, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *b, g.map(|x| -x));
                    accumulate(&mut adj, *a, g);
                }
                Op::Mul(a, b) => {
                    let da = g.zip_map(self.value(*b), |x, y| x * y);
                    let db = g.zip_map(self.value(*a), |x, y| x * y);
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *b, db);
                }
                Op::MulCol(a, col) => {
                    let (av, cv) = (self.value(*a), self.value(*col));
                    let m = av.cols();
                    let mut da = g.clone();
                    let mut dc = vec![0.0; cv.rows()];
                    for (k, x) in da.data_mut().iter_mut().enumerate() {
                        dc[k / m] += *x * av.data()[k];
                        *x *= cv.data()[k / m];
                    }
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *col, Tensor::column(&dc));
                }
                Op::Scale(a, k) => accumulate(&mut adj, *a, g.map(|x| k * x)),
                Op::AddScalar(a) => accumulate(&mut adj, *a, g),
                Op::Elu(a, alpha) => {
                    let xv = self.value(*a);
                    let yv = y.expect("elu value");
                    let mut d = g;
                    for ((d, &x), &yy) in d.data_mut().iter_mut().zip(xv.data()).zip(yv.data()) {
                        if x < 0.0 {
                            *d *= yy + alpha;
                        }
                    }
                    accumulate(&mut adj, *a, d);
                }
                Op::Sigmoid(a) => {
                    let d = g.zip_map(y.expect("sigmoid value"), |gg, s| gg * s * (1.0 - s));
                    accumulate(&mut adj, *a, d);
                }
                Op::Tanh(a) => {
                    let d = g.zip_map(y.expect("tanh value"), |gg, t| gg * (1.0 - t * t));
                    accumulate(&mut adj, *a, d);
                }
                Op::Exp(a) => {
                    let d = g.zip_map(y.expect("exp value"), |gg, e| gg * e);
                    accumulate(&mut adj, *a, d);
                }
                Op::Abs(a) => {
                    let d = g.zip_map(self.value(*a), |gg, x| {
                        if x > 0.0 {
                            gg
                        } else if x < 0.0 {
                            -gg
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut adj, *a, d);
                }
                Op::Square(a) => {
                    let d = g.zip_map(self.value(*a), |gg, x| 2.0 * x * gg);
                    accumulate(&mut adj, *a, d);
                }
                Op::Clamp(a, lo, hi) => {
                    let d = g.zip_map(self.value(*a), |gg, x| if x >= *lo && x <= *hi { gg } else { 0.0 });
                    accumulate(&mut adj, *a, d);
                }
                Op::Min(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let mut da = g.clone();
                    let mut db = g;
                    for k in 0..da.len() {
                        if av.data()[k] <= bv.data()[k] {
                            db.data_mut()[k] = 0.0;
                        } else {
                            da.data_mut()[k] = 0.0;
                        }
                    }
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *b, db);
                }
                Op::RowNorm(a) => {
                    let xv = self.value(*a);
                    let yv = y.expect("norm value");
                    let m = xv.cols();
                    let mut d = xv.clone();
                    for (k, x) in d.data_mut().iter_mut().enumerate() {
                        let r = k / m;
                        let n = yv.data()[r];
                        *x = if n > 0.0 { g.data()[r] * *x / n } else { 0.0 };
                    }
                    accumulate(&mut adj, *a, d);
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    accumulate(&mut adj, *a, Tensor::filled(r, c, g.item()));
                }
                Op::Mean(a) => {
                    let (r, c) = self.value(*a).shape();
                    let n = (r * c).max(1) as f64;
                    accumulate(&mut adj, *a, Tensor::filled(r, c, g.item() / n));
                }
                Op::SumCols(a) => {
                    let (r, c) = self.value(*a).shape();
                    let mut d = Tensor::zeros(r, c);
                    for (k, x) in d.data_mut().iter_mut().enumerate() {
                        *x = g.data()[k / c];
                    }
                    accumulate(&mut adj, *a, d);
                }
                Op::ConcatRows(parts) => {
                    let cols = g.cols();
                    let mut offset = 0;
                    for p in parts {
                        let rows = self.value(*p).rows();
                        let slice = g.data()[offset * cols..(offset + rows) * cols].to_vec();
                        accumulate(&mut adj, *p, Tensor::from_vec(rows, cols, slice)?);
                        offset += rows;
                    }
                }
                Op::GaussianLogProb { mean, log_std, actions } => {
                    let (mv, lv) = (self.value(*mean), self.value(*log_std));
                    let m = mv.cols();
                    let mut dmean = Tensor::zeros(mv.rows(), m);
                    let mut dls = vec![0.0; m];
                    for r in 0..mv.rows() {
                        let gr = g.data()[r];
                        for c in 0..m {
                            let inv = libm::exp(-lv.data()[c]);
                            let diff = actions.get(r, c) - mv.get(r, c);
                            let z = diff * inv;
                            dmean.data_mut()[r * m + c] = gr * z * inv;
                            dls[c] += gr * (z * z - 1.0);
                        }
                    }
                    accumulate(&mut adj, *mean, dmean);
                    accumulate(&mut adj, *log_std, Tensor::row(&dls));
                }
                Op::GaussianEntropy(ls) => {
                    let (r, c) = self.value(*ls).shape();
                    accumulate(&mut adj, *ls, Tensor::filled(r, c, g.item()));
                }
            }
        }
        Ok(())
    }
}

fn inputs(op: &Op) -> Vec<Var> {
    match op {
        Op::Constant | Op::Param(_) => Vec::new(),
        Op::MatMul(a, b)
        | Op::AddRow(a, b)
        | Op::Add(a, b)
        | Op::Sub(a, b)
        | Op::Mul(a, b)
        | Op::MulCol(a, b)
        | Op::Min(a, b) => vec![*a, *b],
        Op::Scale(a, _)
        | Op::AddScalar(a)
        | Op::Elu(a, _)
        | Op::Sigmoid(a)
        | Op::Tanh(a)
        | Op::Exp(a)
        | Op::Abs(a)
        | Op::Square(a)
        | Op::RowNorm(a)
        | Op::Sum(a)
        | Op::Mean(a)
        | Op::SumCols(a)
        | Op::Clamp(a, _, _)
        | Op::GaussianEntropy(a) => vec![*a],
        Op::ConcatRows(parts) => parts.clone(),
        Op::GaussianLogProb { mean, log_std, .. } => vec![*mean, *log_std],
    }
}

fn accumulate(adj: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut adj[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot => *slot = Some(g),
    }
}

pub fn elu(x: f64, alpha: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        alpha * libm::expm1(x)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}
