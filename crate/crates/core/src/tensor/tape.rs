//! Expression tape recording forward operations for reverse-mode gradients.
//!
//! A [`Tape`] borrows a [`ParameterStore`], records eagerly-evaluated ops as
//! nodes, and on [`Tape::backward`] walks the nodes in reverse, accumulating
//! parameter gradients into a [`Gradients`] sink. Each training example builds
//! its own short-lived tape; the tape is consumed by the backward pass.

use crate::error::{Error, Result};
use crate::tensor::params::{ParamId, ParameterStore};
use crate::tensor::{matmul_raw, Tensor};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    /// Constant input; no gradient flows past it.
    Const,
    /// Leaf bound to a store parameter (zero-copy; value read from the store).
    Param(ParamId),
    Matmul(Var, Var),
    Add(Var, Var),
    /// Broadcast-add a column vector to every column: `x [r,c] + b [r,1]`.
    AddColBroadcast(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Relu(Var),
    Transpose(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    /// Extract column `j` as `[r,1]`.
    Col(Var, usize),
    MeanCols(Var),
    /// Row lookup from an embedding table, returned as a column vector.
    Embed(Var, usize),
    /// Column-wise softmax; `mask[i] == false` zeroes row `i` out of every
    /// column's distribution.
    SoftmaxCols(Var, Option<Vec<bool>>),
    /// Column-wise layer norm with learned gain/bias `[r,1]`.
    LayerNormCols { x: Var, gamma: Var, beta: Var },
    /// Fused listwise cross-entropy: `-sum_i c_i * log softmax(s)_i` for a
    /// score column `s [n,1]` and fixed coefficients `c`.
    ListwiseCe(Var, Vec<f64>),
    /// Inverted dropout with a fixed keep mask and 1/keep_prob scale.
    Dropout(Var, Vec<bool>, f64),
}

struct Node {
    op: Op,
    /// Owned forward value; `None` for `Param` nodes (read from the store).
    val: Option<Tensor>,
    needs_grad: bool,
}

/// Per-parameter gradient accumulator produced by a backward pass.
pub struct Gradients {
    by_param: Vec<Option<Tensor>>,
}

impl Gradients {
    pub(crate) fn new(n_params: usize) -> Self {
        Gradients { by_param: (0..n_params).map(|_| None).collect() }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.by_param.get(id.index()).and_then(|g| g.as_ref())
    }

    /// Fold another pass's gradients into this one (summing overlaps).
    pub fn merge(&mut self, other: Gradients) {
        for (slot, incoming) in self.by_param.iter_mut().zip(other.by_param) {
            match (slot.as_mut(), incoming) {
                (Some(acc), Some(inc)) => {
                    for (a, b) in acc.data_mut().iter_mut().zip(inc.data()) {
                        *a += b;
                    }
                }
                (None, Some(inc)) => *slot = Some(inc),
                _ => {}
            }
        }
    }

    pub(crate) fn into_inner(self) -> Vec<Option<Tensor>> {
        self.by_param
    }
}

pub struct Tape<'s> {
    store: &'s ParameterStore,
    nodes: Vec<Node>,
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParameterStore) -> Self {
        Tape { store, nodes: Vec::with_capacity(128) }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].op {
            Op::Param(id) => self.store.value(*id),
            _ => self.nodes[v.0].val.as_ref().expect("non-param node has a value"),
        }
    }

    /// Forward value detached from the graph.
    pub fn detach(&self, v: Var) -> Tensor {
        self.value(v).clone()
    }

    fn push(&mut self, op: Op, val: Option<Tensor>, needs_grad: bool) -> Var {
        #[cfg(debug_assertions)]
        if let Some(t) = &val {
            debug_assert!(t.is_finite(), "non-finite value produced on tape");
        }
        self.nodes.push(Node { op, val, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Const, Some(t), false)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.push(Op::Param(id), None, true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        if ac != br {
            return Err(Error::Dimension(format!(
                "matmul inner dims differ: {ar}x{ac} * {br}x{bc}"
            )));
        }
        let out = matmul_raw(self.value(a), self.value(b));
        let ng = self.any_grad(&[a, b]);
        Ok(self.push(Op::Matmul(a, b), Some(out), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::Dimension(format!(
                "add shapes differ: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let mut out = self.value(a).clone();
        for (o, x) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o += x;
        }
        let ng = self.any_grad(&[a, b]);
        Ok(self.push(Op::Add(a, b), Some(out), ng))
    }

    pub fn add_col_broadcast(&mut self, x: Var, b: Var) -> Result<Var> {
        let (r, c) = self.value(x).shape();
        if self.value(b).shape() != (r, 1) {
            return Err(Error::Dimension(format!(
                "broadcast add expects bias [{}x1], got {:?}",
                r,
                self.value(b).shape()
            )));
        }
        let mut out = self.value(x).clone();
        for i in 0..r {
            let bi = self.value(b).at(i, 0);
            for j in 0..c {
                let v = out.at(i, j) + bi;
                out.set(i, j, v);
            }
        }
        let ng = self.any_grad(&[x, b]);
        Ok(self.push(Op::AddColBroadcast(x, b), Some(out), ng))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            *v *= k;
        }
        let ng = self.any_grad(&[x]);
        self.push(Op::Scale(x, k), Some(out), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let nb = self.scale(b, -1.0);
        self.add(a, nb)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            *v = v.tanh();
        }
        let ng = self.any_grad(&[x]);
        self.push(Op::Tanh(x), Some(out), ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            *v = v.max(0.0);
        }
        let ng = self.any_grad(&[x]);
        self.push(Op::Relu(x), Some(out), ng)
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let out = self.value(x).transposed();
        let ng = self.any_grad(&[x]);
        self.push(Op::Transpose(x), Some(out), ng)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Contract("concat_rows needs at least one part".into()));
        }
        let cols = self.value(parts[0]).cols();
        let mut rows = 0;
        for &p in parts {
            if self.value(p).cols() != cols {
                return Err(Error::Dimension("concat_rows parts differ in column count".into()));
            }
            rows += self.value(p).rows();
        }
        let mut out = Tensor::zeros(rows, cols);
        let mut r0 = 0;
        for &p in parts {
            let t = self.value(p);
            for r in 0..t.rows() {
                for c in 0..cols {
                    out.set(r0 + r, c, t.at(r, c));
                }
            }
            r0 += t.rows();
        }
        let ng = self.any_grad(parts);
        Ok(self.push(Op::ConcatRows(parts.to_vec()), Some(out), ng))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Contract("concat_cols needs at least one part".into()));
        }
        let rows = self.value(parts[0]).rows();
        let mut cols = 0;
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(Error::Dimension("concat_cols parts differ in row count".into()));
            }
            cols += self.value(p).cols();
        }
        let mut out = Tensor::zeros(rows, cols);
        let mut c0 = 0;
        for &p in parts {
            let t = self.value(p);
            for r in 0..rows {
                for c in 0..t.cols() {
                    out.set(r, c0 + c, t.at(r, c));
                }
            }
            c0 += t.cols();
        }
        let ng = self.any_grad(parts);
        Ok(self.push(Op::ConcatCols(parts.to_vec()), Some(out), ng))
    }

    pub fn col(&mut self, x: Var, j: usize) -> Result<Var> {
        let (r, c) = self.value(x).shape();
        if j >= c {
            return Err(Error::Index(format!("column {j} out of range for {r}x{c}")));
        }
        let mut out = Tensor::zeros(r, 1);
        for i in 0..r {
            out.set(i, 0, self.value(x).at(i, j));
        }
        let ng = self.any_grad(&[x]);
        Ok(self.push(Op::Col(x, j), Some(out), ng))
    }

    pub fn mean_cols(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.value(x).shape();
        if c == 0 {
            return Err(Error::Contract("mean over zero columns".into()));
        }
        let mut out = Tensor::zeros(r, 1);
        for i in 0..r {
            let mut s = 0.0;
            for j in 0..c {
                s += self.value(x).at(i, j);
            }
            out.set(i, 0, s / c as f64);
        }
        let ng = self.any_grad(&[x]);
        Ok(self.push(Op::MeanCols(x), Some(out), ng))
    }

    /// Look up row `row` of embedding table `table [vocab, e]` as `[e, 1]`.
    pub fn embed(&mut self, table: Var, row: usize) -> Result<Var> {
        let (vocab, e) = self.value(table).shape();
        if row >= vocab {
            return Err(Error::Index(format!(
                "embedding row {row} out of range for table with {vocab} rows"
            )));
        }
        let mut out = Tensor::zeros(e, 1);
        for k in 0..e {
            out.set(k, 0, self.value(table).at(row, k));
        }
        let ng = self.any_grad(&[table]);
        Ok(self.push(Op::Embed(table, row), Some(out), ng))
    }

    /// Numerically stable column-wise softmax. With a mask, row `i` is
    /// excluded from every column's distribution when `mask[i]` is false;
    /// each column must keep at least one valid row.
    pub fn softmax_cols(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var> {
        let (r, c) = self.value(x).shape();
        if let Some(m) = mask {
            if m.len() != r {
                return Err(Error::Dimension(format!(
                    "softmax mask length {} does not match {} rows",
                    m.len(),
                    r
                )));
            }
            if !m.iter().any(|&b| b) {
                return Err(Error::Contract("softmax mask excludes every row".into()));
            }
        }
        let valid = |i: usize| mask.map_or(true, |m| m[i]);
        let mut out = Tensor::zeros(r, c);
        for j in 0..c {
            let mut mx = f64::NEG_INFINITY;
            for i in 0..r {
                if valid(i) {
                    mx = mx.max(self.value(x).at(i, j));
                }
            }
            let mut z = 0.0;
            for i in 0..r {
                if valid(i) {
                    z += (self.value(x).at(i, j) - mx).exp();
                }
            }
            for i in 0..r {
                if valid(i) {
                    out.set(i, j, (self.value(x).at(i, j) - mx).exp() / z);
                }
            }
        }
        let ng = self.any_grad(&[x]);
        Ok(self.push(Op::SoftmaxCols(x, mask.map(|m| m.to_vec())), Some(out), ng))
    }

    /// Column-wise layer normalization with learned gain and bias `[r, 1]`.
    pub fn layer_norm_cols(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        const EPS: f64 = 1e-5;
        let (r, c) = self.value(x).shape();
        if self.value(gamma).shape() != (r, 1) || self.value(beta).shape() != (r, 1) {
            return Err(Error::Dimension(format!(
                "layer norm gain/bias must be [{r}x1], got {:?} and {:?}",
                self.value(gamma).shape(),
                self.value(beta).shape()
            )));
        }
        let mut out = Tensor::zeros(r, c);
        for j in 0..c {
            let mut mu = 0.0;
            for i in 0..r {
                mu += self.value(x).at(i, j);
            }
            mu /= r as f64;
            let mut var = 0.0;
            for i in 0..r {
                let d = self.value(x).at(i, j) - mu;
                var += d * d;
            }
            var /= r as f64;
            let sigma = (var + EPS).sqrt();
            for i in 0..r {
                let xhat = (self.value(x).at(i, j) - mu) / sigma;
                out.set(i, j, self.value(gamma).at(i, 0) * xhat + self.value(beta).at(i, 0));
            }
        }
        let ng = self.any_grad(&[x, gamma, beta]);
        Ok(self.push(Op::LayerNormCols { x, gamma, beta }, Some(out), ng))
    }

    /// Listwise cross-entropy against fixed coefficients:
    /// `L = -sum_i c_i * log softmax(s)_i` for scores `s [n, 1]`.
    pub fn listwise_ce(&mut self, scores: Var, coeffs: &[f64]) -> Result<Var> {
        let (n, c) = self.value(scores).shape();
        if c != 1 || coeffs.len() != n {
            return Err(Error::Dimension(format!(
                "listwise loss expects scores [{}x1] matching {} coefficients",
                n,
                coeffs.len()
            )));
        }
        let s = self.value(scores);
        let mx = s.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + s.data().iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
        let mut loss = 0.0;
        for (i, &ci) in coeffs.iter().enumerate() {
            loss -= ci * (s.at(i, 0) - lse);
        }
        let ng = self.any_grad(&[scores]);
        Ok(self.push(Op::ListwiseCe(scores, coeffs.to_vec()), Some(Tensor::scalar(loss)), ng))
    }

    /// Inverted dropout: elements drop with probability `rate`, survivors
    /// scale by 1/(1-rate). `rate = 0` is the identity.
    pub fn dropout(&mut self, x: Var, rate: f64, rng: &mut impl rand::Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Contract(format!("dropout rate {rate} must be in [0, 1)")));
        }
        if rate == 0.0 {
            return Ok(x);
        }
        let keep_prob = 1.0 - rate;
        let scale = 1.0 / keep_prob;
        let mask: Vec<bool> = (0..self.value(x).numel()).map(|_| rng.gen_bool(keep_prob)).collect();
        let mut out = self.value(x).clone();
        for (v, &keep) in out.data_mut().iter_mut().zip(&mask) {
            *v = if keep { *v * scale } else { 0.0 };
        }
        let ng = self.any_grad(&[x]);
        Ok(self.push(Op::Dropout(x, mask, scale), Some(out), ng))
    }

    /// Reverse pass from a scalar `loss`, seeding `dL/dloss = seed`.
    /// Consumes the tape and returns per-parameter gradients.
    pub fn backward(self, loss: Var, seed: f64) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward target must be scalar, got {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        {
            let (lr, lc) = self.value(loss).shape();
            let mut g = Tensor::zeros(lr, lc);
            g.set(0, 0, seed);
            grads[loss.0] = Some(g);
        }
        let mut sink = Gradients::new(self.store.len());

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            match &self.nodes[i].op {
                Op::Const => {}
                Op::Param(id) => {
                    let slot = &mut sink.by_param[id.index()];
                    match slot {
                        Some(acc) => {
                            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                                *a += b;
                            }
                        }
                        None => *slot = Some(g),
                    }
                }
                Op::Matmul(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.nodes[a.0].needs_grad {
                        let bt = self.value(b).transposed();
                        let da = matmul_raw(&g, &bt);
                        accumulate(&mut grads[a.0], da);
                    }
                    if self.nodes[b.0].needs_grad {
                        let at = self.value(a).transposed();
                        let db = matmul_raw(&at, &g);
                        accumulate(&mut grads[b.0], db);
                    }
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.nodes[a.0].needs_grad {
                        accumulate(&mut grads[a.0], g.clone());
                    }
                    if self.nodes[b.0].needs_grad {
                        accumulate(&mut grads[b.0], g);
                    }
                }
                Op::AddColBroadcast(x, b) => {
                    let (x, b) = (*x, *b);
                    if self.nodes[b.0].needs_grad {
                        let (r, c) = g.shape();
                        let mut db = Tensor::zeros(r, 1);
                        for i2 in 0..r {
                            let mut s = 0.0;
                            for j in 0..c {
                                s += g.at(i2, j);
                            }
                            db.set(i2, 0, s);
                        }
                        accumulate(&mut grads[b.0], db);
                    }
                    if self.nodes[x.0].needs_grad {
                        accumulate(&mut grads[x.0], g);
                    }
                }
                Op::Scale(x, k) => {
                    let (x, k) = (*x, *k);
                    if self.nodes[x.0].needs_grad {
                        let mut dx = g;
                        for v in dx.data_mut() {
                            *v *= k;
                        }
                        accumulate(&mut grads[x.0], dx);
                    }
                }
                Op::Tanh(x) => {
                    let x = *x;
                    if self.nodes[x.0].needs_grad {
                        let y = self.nodes[i].val.as_ref().unwrap();
                        let mut dx = g;
                        for (v, yi) in dx.data_mut().iter_mut().zip(y.data()) {
                            *v *= 1.0 - yi * yi;
                        }
                        accumulate(&mut grads[x.0], dx);
                    }
                }
                Op::Relu(x) => {
                    let x = *x;
                    if self.nodes[x.0].needs_grad {
                        let mut dx = g;
                        for (v, xi) in dx.data_mut().iter_mut().zip(self.value(x).data()) {
                            if *xi <= 0.0 {
                                *v = 0.0;
                            }
                        }
                        accumulate(&mut grads[x.0], dx);
                    }
                }
                Op::Transpose(x) => {
                    let x = *x;
                    if self.nodes[x.0].needs_grad {
                        accumulate(&mut grads[x.0], g.transposed());
                    }
                }
                Op::ConcatRows(parts) => {
                    let parts = parts.clone();
                    let cols = g.cols();
                    let mut r0 = 0;
                    for p in parts {
                        let pr = self.value(p).rows();
                        if self.nodes[p.0].needs_grad {
                            let mut dp = Tensor::zeros(pr, cols);
                            for r in 0..pr {
                                for c in 0..cols {
                                    dp.set(r, c, g.at(r0 + r, c));
                                }
                            }
                            accumulate(&mut grads[p.0], dp);
                        }
                        r0 += pr;
                    }
                }
                Op::ConcatCols(parts) => {
                    let parts = parts.clone();
                    let rows = g.rows();
                    let mut c0 = 0;
                    for p in parts {
                        let pc = self.value(p).cols();
                        if self.nodes[p.0].needs_grad {
                            let mut dp = Tensor::zeros(rows, pc);
                            for r in 0..rows {
                                for c in 0..pc {
                                    dp.set(r, c, g.at(r, c0 + c));
                                }
                            }
                            accumulate(&mut grads[p.0], dp);
                        }
                        c0 += pc;
                    }
                }
                Op::Col(x, j) => {
                    let (x, j) = (*x, *j);
                    if self.nodes[x.0].needs_grad {
                        let (r, c) = self.value(x).shape();
                        let mut dx = Tensor::zeros(r, c);
                        for i2 in 0..r {
                            dx.set(i2, j, g.at(i2, 0));
                        }
                        accumulate(&mut grads[x.0], dx);
                    }
                }
                Op::MeanCols(x) => {
                    let x = *x;
                    if self.nodes[x.0].needs_grad {
                        let (r, c) = self.value(x).shape();
                        let mut dx = Tensor::zeros(r, c);
                        for i2 in 0..r {
                            let gi = g.at(i2, 0) / c as f64;
                            for j in 0..c {
                                dx.set(i2, j, gi);
                            }
                        }
                        accumulate(&mut grads[x.0], dx);
                    }
                }
                Op::Embed(table, row) => {
                    let (table, row) = (*table, *row);
                    if self.nodes[table.0].needs_grad {
                        let (vocab, e) = self.value(table).shape();
                        let mut dt = Tensor::zeros(vocab, e);
                        for k in 0..e {
                            dt.set(row, k, g.at(k, 0));
                        }
                        accumulate(&mut grads[table.0], dt);
                    }
                }
                Op::SoftmaxCols(x, _mask) => {
                    let x = *x;
                    if self.nodes[x.0].needs_grad {
                        let y = self.nodes[i].val.as_ref().unwrap();
                        let (r, c) = y.shape();
                        let mut dx = Tensor::zeros(r, c);
                        for j in 0..c {
                            let mut dot = 0.0;
                            for i2 in 0..r {
                                dot += g.at(i2, j) * y.at(i2, j);
                            }
                            for i2 in 0..r {
                                dx.set(i2, j, y.at(i2, j) * (g.at(i2, j) - dot));
                            }
                        }
                        accumulate(&mut grads[x.0], dx);
                    }
                }
                Op::LayerNormCols { x, gamma, beta } => {
                    const EPS: f64 = 1e-5;
                    let (x, gamma, beta) = (*x, *gamma, *beta);
                    let (r, c) = self.value(x).shape();
                    // Recompute per-column statistics for the backward rule.
                    let mut dgamma = Tensor::zeros(r, 1);
                    let mut dbeta = Tensor::zeros(r, 1);
                    let mut dx = Tensor::zeros(r, c);
                    for j in 0..c {
                        let mut mu = 0.0;
                        for i2 in 0..r {
                            mu += self.value(x).at(i2, j);
                        }
                        mu /= r as f64;
                        let mut var = 0.0;
                        for i2 in 0..r {
                            let d = self.value(x).at(i2, j) - mu;
                            var += d * d;
                        }
                        var /= r as f64;
                        let sigma = (var + EPS).sqrt();
                        let mut mean_gy = 0.0;
                        let mut mean_gy_xhat = 0.0;
                        let mut xhat = vec![0.0; r];
                        let mut gy = vec![0.0; r];
                        for i2 in 0..r {
                            xhat[i2] = (self.value(x).at(i2, j) - mu) / sigma;
                            gy[i2] = self.value(gamma).at(i2, 0) * g.at(i2, j);
                            mean_gy += gy[i2];
                            mean_gy_xhat += gy[i2] * xhat[i2];
                        }
                        mean_gy /= r as f64;
                        mean_gy_xhat /= r as f64;
                        for i2 in 0..r {
                            let v = dgamma.at(i2, 0) + g.at(i2, j) * xhat[i2];
                            dgamma.set(i2, 0, v);
                            let v = dbeta.at(i2, 0) + g.at(i2, j);
                            dbeta.set(i2, 0, v);
                            dx.set(i2, j, (gy[i2] - mean_gy - xhat[i2] * mean_gy_xhat) / sigma);
                        }
                    }
                    if self.nodes[x.0].needs_grad {
                        accumulate(&mut grads[x.0], dx);
                    }
                    if self.nodes[gamma.0].needs_grad {
                        accumulate(&mut grads[gamma.0], dgamma);
                    }
                    if self.nodes[beta.0].needs_grad {
                        accumulate(&mut grads[beta.0], dbeta);
                    }
                }
                Op::Dropout(x, mask, scale) => {
                    let (x, scale) = (*x, *scale);
                    if self.nodes[x.0].needs_grad {
                        let mut dx = g;
                        for (v, &keep) in dx.data_mut().iter_mut().zip(mask) {
                            *v = if keep { *v * scale } else { 0.0 };
                        }
                        accumulate(&mut grads[x.0], dx);
                    }
                }
                Op::ListwiseCe(scores, coeffs) => {
                    let scores = *scores;
                    if self.nodes[scores.0].needs_grad {
                        let coeffs = coeffs.clone();
                        let s = self.value(scores);
                        let n = s.rows();
                        let mx = s.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let z: f64 = s.data().iter().map(|v| (v - mx).exp()).sum();
                        let csum: f64 = coeffs.iter().sum();
                        let g0 = g.at(0, 0);
                        let mut ds = Tensor::zeros(n, 1);
                        for i2 in 0..n {
                            let p = (s.at(i2, 0) - mx).exp() / z;
                            ds.set(i2, 0, g0 * (csum * p - coeffs[i2]));
                        }
                        accumulate(&mut grads[scores.0], ds);
                    }
                }
            }
        }
        Ok(sink)
    }
}

fn accumulate(slot: &mut Option<Tensor>, inc: Tensor) {
    match slot {
        Some(acc) => {
            debug_assert_eq!(acc.shape(), inc.shape());
            for (a, b) in acc.data_mut().iter_mut().zip(inc.data()) {
                *a += b;
            }
        }
        None => *slot = Some(inc),
    }
}
