//! Matrix-valued reverse-mode differentiation tape.
//!
//! The tape only knows the operations the frontend is built from: affine
//! maps, element-wise arithmetic, logistic/swish activations, layer
//! normalisation, causal depthwise convolution, multi-head attention with an
//! optional causal window, and the mask loss. Each node stores its value plus
//! whatever the backward rule needs; [`Tape::backward`] walks the nodes in
//! reverse and accumulates gradients for every node that depends on a
//! parameter.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::scalar::{sum, Scalar};
use crate::tensor::{gemm_into, Matrix};

/// Handle to a tensor in a [`ParameterStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameter tensors with matching gradient buffers.
#[derive(Clone, Debug)]
pub struct ParameterStore<T> {
    names: Vec<String>,
    values: Vec<Matrix<T>>,
    grads: Vec<Matrix<T>>,
    index: HashMap<String, ParamId>,
}

impl<T: Scalar> Default for ParameterStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParameterStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Register a new tensor. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, value: Matrix<T>) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name `{name}`")));
        }
        let id = ParamId(self.values.len());
        self.grads.push(Matrix::zeros(value.rows(), value.cols()));
        self.values.push(value);
        self.index.insert(name.clone(), id);
        self.names.push(name);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total scalar parameter count.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix<T> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix<T> {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Matrix<T> {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Matrix<T> {
        &mut self.grads[id.0]
    }

    /// Simultaneous mutable access to a value and its gradient.
    pub fn value_and_grad_mut(&mut self, id: ParamId) -> (&mut Matrix<T>, &Matrix<T>) {
        (&mut self.values[id.0], &self.grads[id.0])
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(T::zero()));
    }

    pub fn scale_grads(&mut self, factor: T) {
        for g in &mut self.grads {
            g.as_mut_slice().iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn grads_finite(&self) -> bool {
        self.grads.iter().all(Matrix::is_finite)
    }

    /// Same names and shapes in another scalar type.
    pub fn cast<U: Scalar>(&self) -> ParameterStore<U> {
        ParameterStore {
            names: self.names.clone(),
            values: self.values.iter().map(Matrix::cast).collect(),
            grads: self.grads.iter().map(Matrix::cast).collect(),
            index: self.index.clone(),
        }
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Causal window for self-attention: query `t` sees keys `[t+1-window, t]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttnMask {
    /// Every key is visible to every query.
    Full,
    /// Causal, limited to `window` frames including the current one.
    CausalWindow(usize),
}

impl AttnMask {
    #[inline]
    fn range(self, t: usize, keys: usize) -> (usize, usize) {
        match self {
            AttnMask::Full => (0, keys),
            AttnMask::CausalWindow(w) => {
                let hi = (t + 1).min(keys);
                (hi.saturating_sub(w.max(1)), hi)
            }
        }
    }
}

enum Op<T> {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, T),
    Sigmoid(Var),
    Swish(Var),
    SliceCols(Var, usize),
    LayerNorm { x: Var, inv_std: Vec<T> },
    CausalDepthwise { x: Var, kernel: Var },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        mask: AttnMask,
        probs: Vec<T>,
    },
    MaskLoss {
        est: Var,
        target: Matrix<T>,
        l1: T,
        l2: T,
    },
    SumAll(Var),
}

struct Node<T> {
    value: Matrix<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Records a forward computation for later differentiation.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn check_same(op: &'static str, a: &Matrix<impl Scalar>, b: &Matrix<impl Scalar>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?}", a.shape()), format!("{:?}", b.shape())));
    }
    Ok(())
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>, parents: &[Var]) -> Var {
        let needs_grad = match op {
            Op::Param(_) => true,
            Op::Input => false,
            _ => parents.iter().any(|p| self.nodes[p.0].needs_grad),
        };
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// Constant leaf.
    pub fn input(&mut self, value: Matrix<T>) -> Var {
        self.push(value, Op::Input, &[])
    }

    /// Trainable leaf bound to a stored parameter.
    pub fn param(&mut self, store: &ParameterStore<T>, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id), &[])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if ac != br {
            return Err(Error::shape("matmul", format!("lhs cols == rhs rows ({ac})"), format!("{br}")));
        }
        let mut out = Matrix::zeros(ar, bc);
        gemm_into(&mut out, T::zero(), self.value(a), false, self.value(b), false);
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("add", self.value(a), self.value(b))?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("sub", self.value(a), self.value(b))?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("mul", self.value(a), self.value(b))?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    fn check_row(&self, op: &'static str, a: Var, row: Var) -> Result<()> {
        let (_, ac) = self.shape(a);
        let rs = self.shape(row);
        if rs != (1, ac) {
            return Err(Error::shape(op, format!("(1, {ac})"), format!("{rs:?}")));
        }
        Ok(())
    }

    /// `a + row` with the row broadcast over every frame.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.check_row("add_row", a, row)?;
        let mut out = self.value(a).clone();
        let r = self.value(row).as_slice();
        for t in 0..out.rows() {
            for (o, &b) in out.row_mut(t).iter_mut().zip(r) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRow(a, row), &[a, row]))
    }

    /// `a ⊙ row` with the row broadcast over every frame.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.check_row("mul_row", a, row)?;
        let mut out = self.value(a).clone();
        let r = self.value(row).as_slice();
        for t in 0..out.rows() {
            for (o, &b) in out.row_mut(t).iter_mut().zip(r) {
                *o *= b;
            }
        }
        Ok(self.push(out, Op::MulRow(a, row), &[a, row]))
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Var {
        let out = self.value(a).map(|x| x * factor);
        self.push(out, Op::Scale(a, factor), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a), &[a])
    }

    /// `x * sigmoid(x)`.
    pub fn swish(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x * sigmoid(x));
        self.push(out, Op::Swish(a), &[a])
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (_, cols) = self.shape(a);
        if start > end || end > cols {
            return Err(Error::shape("slice_cols", format!("range within {cols} columns"), format!("{start}..{end}")));
        }
        let out = self.value(a).slice_cols(start, end);
        Ok(self.push(out, Op::SliceCols(a, start), &[a]))
    }

    /// Per-row normalisation to zero mean and unit variance (no affine).
    pub fn layer_norm(&mut self, a: Var, eps: T) -> Var {
        let x = self.value(a);
        let (rows, cols) = x.shape();
        let n = T::of(cols as f64);
        let mut out = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for t in 0..rows {
            let row = x.row(t);
            let mean = sum(row.iter().copied()) / n;
            let var = sum(row.iter().map(|&v| (v - mean) * (v - mean))) / n;
            let is = T::one() / (var + eps).sqrt();
            inv_std.push(is);
            for (o, &v) in out.row_mut(t).iter_mut().zip(row) {
                *o = (v - mean) * is;
            }
        }
        self.push(out, Op::LayerNorm { x: a, inv_std }, &[a])
    }

    /// Causal depthwise convolution: `y[t,c] = sum_j w[j,c] * x[t-K+1+j, c]`
    /// with zero padding before the first frame. `kernel` is `K x C`.
    pub fn causal_depthwise_conv(&mut self, x: Var, kernel: Var) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        let (k, kc) = self.shape(kernel);
        if kc != cols || k == 0 {
            return Err(Error::shape("causal_depthwise_conv", format!("(K>0, {cols})"), format!("({k}, {kc})")));
        }
        let xv = self.value(x);
        let w = self.value(kernel);
        let mut out = Matrix::zeros(rows, cols);
        for t in 0..rows {
            let o = out.row_mut(t);
            for j in 0..k {
                let Some(s) = (t + j + 1).checked_sub(k) else { continue };
                let xr = xv.row(s);
                let wr = w.row(j);
                for c in 0..cols {
                    o[c] += wr[c] * xr[c];
                }
            }
        }
        Ok(self.push(out, Op::CausalDepthwise { x, kernel }, &[x, kernel]))
    }

    /// Scaled dot-product attention over `heads` equal column groups.
    ///
    /// `q` is `T x d`, `k` and `v` are `S x d`. With
    /// [`AttnMask::CausalWindow`] the query index is aligned with the key
    /// index, so `T` and `S` normally coincide.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, mask: AttnMask) -> Result<Var> {
        let (tq, d) = self.shape(q);
        let (sk, dk) = self.shape(k);
        let (sv, dv) = self.shape(v);
        if dk != d || dv != d || sk != sv {
            return Err(Error::shape(
                "attention",
                format!("q (T, {d}), k/v (S, {d})"),
                format!("k {:?}, v {:?}", (sk, dk), (sv, dv)),
            ));
        }
        if heads == 0 || d % heads != 0 {
            return Err(Error::shape("attention", format!("d divisible by heads ({heads})"), format!("d = {d}")));
        }
        if sk == 0 {
            return Err(Error::EmptyContext);
        }
        let dh = d / heads;
        let scale = T::one() / T::of(dh as f64).sqrt();
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let mut out = Matrix::zeros(tq, d);
        let mut probs = Vec::new();
        let mut scores = Vec::new();
        for t in 0..tq {
            let (lo, hi) = mask.range(t, sk);
            if lo >= hi {
                return Err(Error::EmptyContext);
            }
            let qrow = qv.row(t);
            for h in 0..heads {
                let cols = h * dh..(h + 1) * dh;
                let qh = &qrow[cols.clone()];
                scores.clear();
                let mut max = T::neg_infinity();
                for s in lo..hi {
                    let kh = &kv.row(s)[cols.clone()];
                    let dot = sum(qh.iter().zip(kh).map(|(&a, &b)| a * b)) * scale;
                    max = max.max(dot);
                    scores.push(dot);
                }
                let mut denom = T::zero();
                for sc in scores.iter_mut() {
                    *sc = (*sc - max).exp();
                    denom += *sc;
                }
                let orow = &mut out.row_mut(t)[cols.clone()];
                for (i, s) in (lo..hi).enumerate() {
                    let p = scores[i] / denom;
                    probs.push(p);
                    let vh = &vv.row(s)[cols.clone()];
                    for (o, &x) in orow.iter_mut().zip(vh) {
                        *o += p * x;
                    }
                }
            }
        }
        Ok(self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                heads,
                mask,
                probs,
            },
            &[q, k, v],
        ))
    }

    /// `l1 * mean|est - target| + l2 * mean (est - target)^2` as a `1 x 1` node.
    pub fn mask_loss(&mut self, est: Var, target: &Matrix<T>, l1: T, l2: T) -> Result<Var> {
        check_same("mask_loss", self.value(est), target)?;
        let e = self.value(est);
        let n = T::of(e.len().max(1) as f64);
        let (mut sa, mut sq) = (T::zero(), T::zero());
        for (&a, &b) in e.as_slice().iter().zip(target.as_slice()) {
            let diff = a - b;
            sa += diff.abs();
            sq += diff * diff;
        }
        let loss = l1 * sa / n + l2 * sq / n;
        Ok(self.push(
            Matrix::filled(1, 1, loss),
            Op::MaskLoss {
                est,
                target: target.clone(),
                l1,
                l2,
            },
            &[est],
        ))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Matrix::filled(1, 1, s), Op::SumAll(a), &[a])
    }

    /// Affine map `x W + b` for `W: in x out`, `b: 1 x out`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_row(y, b)
    }

    /// Differentiate the `1 x 1` node `root` and add parameter gradients into
    /// `store`'s gradient buffers.
    pub fn backward(&self, root: Var, store: &mut ParameterStore<T>) -> Result<()> {
        let grads = self.gradients(root)?;
        for (node, g) in self.nodes.iter().zip(grads) {
            if let (Op::Param(id), Some(g)) = (&node.op, g) {
                store.grad_mut(*id).add_assign(&g);
            }
        }
        Ok(())
    }

    /// Gradient of `root` with respect to every node that needs one.
    pub fn gradients(&self, root: Var) -> Result<Vec<Option<Matrix<T>>>> {
        if self.shape(root) != (1, 1) {
            return Err(Error::shape("backward", "(1, 1) root", format!("{:?}", self.shape(root))));
        }
        let mut grads: Vec<Option<Matrix<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Matrix::filled(1, 1, T::one()));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(grads)
    }

    fn accumulate(&self, grads: &mut [Option<Matrix<T>>], v: Var, make: impl FnOnce() -> Matrix<T>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let g = make();
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn accumulate_with(&self, grads: &mut [Option<Matrix<T>>], v: Var, f: impl FnOnce(&mut Matrix<T>)) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let slot = &mut grads[v.0];
        if slot.is_none() {
            let (r, c) = self.shape(v);
            *slot = Some(Matrix::zeros(r, c));
        }
        f(slot.as_mut().expect("initialised above"));
    }

    fn backprop_node(&self, i: usize, g: &Matrix<T>, grads: &mut [Option<Matrix<T>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                self.accumulate_with(grads, *a, |acc| gemm_into(acc, T::one(), g, false, bv, true));
                self.accumulate_with(grads, *b, |acc| gemm_into(acc, T::one(), av, true, g, false));
            }
            Op::Add(a, b) => {
                self.accumulate_with(grads, *a, |acc| acc.add_assign(g));
                self.accumulate_with(grads, *b, |acc| acc.add_assign(g));
            }
            Op::Sub(a, b) => {
                self.accumulate_with(grads, *a, |acc| acc.add_assign(g));
                self.accumulate_with(grads, *b, |acc| acc.axpy(-T::one(), g));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                self.accumulate(grads, *a, || g.zip_map(bv, |x, y| x * y));
                self.accumulate(grads, *b, || g.zip_map(av, |x, y| x * y));
            }
            Op::AddRow(a, row) => {
                self.accumulate_with(grads, *a, |acc| acc.add_assign(g));
                self.accumulate_with(grads, *row, |acc| {
                    let acc = acc.as_mut_slice();
                    for t in 0..g.rows() {
                        for (o, &x) in acc.iter_mut().zip(g.row(t)) {
                            *o += x;
                        }
                    }
                });
            }
            Op::MulRow(a, row) => {
                let av = self.value(*a);
                let rv = self.value(*row).as_slice();
                self.accumulate_with(grads, *a, |acc| {
                    for t in 0..g.rows() {
                        for ((o, &x), &r) in acc.row_mut(t).iter_mut().zip(g.row(t)).zip(rv) {
                            *o += x * r;
                        }
                    }
                });
                self.accumulate_with(grads, *row, |acc| {
                    let acc = acc.as_mut_slice();
                    for t in 0..g.rows() {
                        for ((o, &x), &y) in acc.iter_mut().zip(g.row(t)).zip(av.row(t)) {
                            *o += x * y;
                        }
                    }
                });
            }
            Op::Scale(a, f) => {
                self.accumulate_with(grads, *a, |acc| acc.axpy(*f, g));
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                self.accumulate(grads, *a, || g.zip_map(y, |gv, s| gv * s * (T::one() - s)));
            }
            Op::Swish(a) => {
                let x = self.value(*a);
                self.accumulate(grads, *a, || {
                    g.zip_map(x, |gv, xv| {
                        let s = sigmoid(xv);
                        gv * (s + xv * s * (T::one() - s))
                    })
                });
            }
            Op::SliceCols(a, start) => {
                let start = *start;
                self.accumulate_with(grads, *a, |acc| {
                    for t in 0..g.rows() {
                        let dst = &mut acc.row_mut(t)[start..start + g.cols()];
                        for (o, &x) in dst.iter_mut().zip(g.row(t)) {
                            *o += x;
                        }
                    }
                });
            }
            Op::LayerNorm { x, inv_std } => {
                let xhat = &node.value;
                let n = T::of(xhat.cols() as f64);
                self.accumulate_with(grads, *x, |acc| {
                    for t in 0..g.rows() {
                        let gr = g.row(t);
                        let hr = xhat.row(t);
                        let mean_g = sum(gr.iter().copied()) / n;
                        let mean_gh = sum(gr.iter().zip(hr).map(|(&a, &b)| a * b)) / n;
                        let is = inv_std[t];
                        for ((o, &gv), &h) in acc.row_mut(t).iter_mut().zip(gr).zip(hr) {
                            *o += is * (gv - mean_g - h * mean_gh);
                        }
                    }
                });
            }
            Op::CausalDepthwise { x, kernel } => {
                let xv = self.value(*x);
                let w = self.value(*kernel);
                let k = w.rows();
                let cols = xv.cols();
                self.accumulate_with(grads, *x, |acc| {
                    for t in 0..g.rows() {
                        let gr = g.row(t);
                        for j in 0..k {
                            let Some(s) = (t + j + 1).checked_sub(k) else { continue };
                            let wr = w.row(j);
                            let dst = acc.row_mut(s);
                            for c in 0..cols {
                                dst[c] += wr[c] * gr[c];
                            }
                        }
                    }
                });
                self.accumulate_with(grads, *kernel, |acc| {
                    for t in 0..g.rows() {
                        let gr = g.row(t);
                        for j in 0..k {
                            let Some(s) = (t + j + 1).checked_sub(k) else { continue };
                            let xr = xv.row(s);
                            let dst = acc.row_mut(j);
                            for c in 0..cols {
                                dst[c] += xr[c] * gr[c];
                            }
                        }
                    }
                });
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                mask,
                probs,
            } => self.backprop_attention(g, *q, *k, *v, *heads, *mask, probs, grads),
            Op::MaskLoss { est, target, l1, l2 } => {
                let e = self.value(*est);
                let n = T::of(e.len().max(1) as f64);
                let scale = g.get(0, 0) / n;
                let two = T::of(2.0);
                self.accumulate(grads, *est, || {
                    e.zip_map(target, |a, b| {
                        let diff = a - b;
                        let sign = if diff > T::zero() {
                            T::one()
                        } else if diff < T::zero() {
                            -T::one()
                        } else {
                            T::zero()
                        };
                        scale * (*l1 * sign + two * *l2 * diff)
                    })
                });
            }
            Op::SumAll(a) => {
                let s = g.get(0, 0);
                self.accumulate_with(grads, *a, |acc| {
                    acc.as_mut_slice().iter_mut().for_each(|o| *o += s);
                });
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn backprop_attention(
        &self,
        g: &Matrix<T>,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        mask: AttnMask,
        probs: &[T],
        grads: &mut [Option<Matrix<T>>],
    ) {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (tq, d) = qv.shape();
        let sk = kv.rows();
        let dh = d / heads;
        let scale = T::one() / T::of(dh as f64).sqrt();
        let mut dq = Matrix::zeros(tq, d);
        let mut dk = Matrix::zeros(sk, d);
        let mut dv = Matrix::zeros(sk, d);
        let mut dp = Vec::new();
        let mut offset = 0;
        for t in 0..tq {
            let (lo, hi) = mask.range(t, sk);
            let len = hi - lo;
            let grow = g.row(t);
            let qrow = qv.row(t);
            for h in 0..heads {
                let cols = h * dh..(h + 1) * dh;
                let p = &probs[offset..offset + len];
                offset += len;
                let gh = &grow[cols.clone()];
                // dP = dOut . V^T and dV += P^T dOut
                dp.clear();
                let mut weighted = T::zero();
                for (i, s) in (lo..hi).enumerate() {
                    let vh = &vv.row(s)[cols.clone()];
                    let dot = sum(gh.iter().zip(vh).map(|(&a, &b)| a * b));
                    dp.push(dot);
                    weighted += dot * p[i];
                    let dvr = &mut dv.row_mut(s)[cols.clone()];
                    for (o, &x) in dvr.iter_mut().zip(gh) {
                        *o += p[i] * x;
                    }
                }
                let qh = &qrow[cols.clone()];
                for (i, s) in (lo..hi).enumerate() {
                    let ds = p[i] * (dp[i] - weighted) * scale;
                    if ds == T::zero() {
                        continue;
                    }
                    let kh = &kv.row(s)[cols.clone()];
                    let dqr = &mut dq.row_mut(t)[cols.clone()];
                    for (o, &x) in dqr.iter_mut().zip(kh) {
                        *o += ds * x;
                    }
                    let dkr = &mut dk.row_mut(s)[cols.clone()];
                    for (o, &x) in dkr.iter_mut().zip(qh) {
                        *o += ds * x;
                    }
                }
            }
        }
        self.accumulate(grads, q, || dq);
        self.accumulate(grads, k, || dk);
        self.accumulate(grads, v, || dv);
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
