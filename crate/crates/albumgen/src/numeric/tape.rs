//! Reverse-mode differentiation over a flat tape of eagerly evaluated ops.
//!
//! Every op appends one node holding its value and the indices of its
//! parents; `backward` walks the tape in reverse and accumulates adjoints.
//! A node used by several consumers receives the sum of their contributions,
//! so parameters reused across timesteps accumulate gradients naturally.

use super::tensor::{
    add, add_row_broadcast, matmul, matmul_nt, matmul_tn, mul, softmax_rows, Tensor,
};
use super::NumericError;

/// Handle to a tape node.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    /// C = A · B
    MatMul { a: Var, b: Var },
    /// C = A · Bᵀ (B stored as [out×in])
    MatMulNT { a: Var, b: Var },
    Add { a: Var, b: Var },
    /// A[m×n] + bias[n] broadcast over rows
    AddRowBroadcast { a: Var, bias: Var },
    Mul { a: Var, b: Var },
    Tanh { a: Var },
    Sigmoid { a: Var },
    Relu { a: Var },
    /// Columns [start, start+width) of the source
    SliceCols { a: Var, start: usize, width: usize },
    /// Row-wise stacking of equally wide parts
    ConcatRows { parts: Vec<Var> },
    /// Row lookup into a table, one group of `group` indices per output row,
    /// concatenated along columns.
    GatherConcat { table: Var, indices: Vec<usize>, group: usize },
    /// W[r][c] = g[r] · v[r][c] / ‖v[r]‖₂
    WeightNorm { v: Var, g: Var },
    /// Mean negative log-likelihood over rows; probs cached for backward.
    SoftmaxXent { logits: Var, targets: Vec<usize>, probs: Tensor },
}

pub struct Tape {
    values: Vec<Tensor>,
    ops: Vec<Op>,
    grads: Vec<Option<Tensor>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            values: Vec::new(),
            ops: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    /// Gradient of the last `backward` root with respect to `v`, if any path
    /// reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor> {
        self.grads[v.0].take()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.values.push(value);
        self.ops.push(op);
        self.grads.push(None);
        Var(self.values.len() - 1)
    }

    /// Insert an input or parameter node.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let value = matmul(self.value(a), self.value(b))?;
        Ok(self.push(value, Op::MatMul { a, b }))
    }

    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let value = matmul_nt(self.value(a), self.value(b))?;
        Ok(self.push(value, Op::MatMulNT { a, b }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let value = add(self.value(a), self.value(b))?;
        Ok(self.push(value, Op::Add { a, b }))
    }

    pub fn add_row_broadcast(&mut self, a: Var, bias: Var) -> Result<Var, NumericError> {
        let value = add_row_broadcast(self.value(a), self.value(bias))?;
        Ok(self.push(value, Op::AddRowBroadcast { a, bias }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let value = mul(self.value(a), self.value(b))?;
        Ok(self.push(value, Op::Mul { a, b }))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = super::tensor::map(self.value(a), f64::tanh);
        self.push(value, Op::Tanh { a })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = super::tensor::map(self.value(a), |x| 1.0 / (1.0 + (-x).exp()));
        self.push(value, Op::Sigmoid { a })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = super::tensor::map(self.value(a), |x| if x > 0.0 { x } else { 0.0 });
        self.push(value, Op::Relu { a })
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var, NumericError> {
        let src = self.value(a);
        if src.shape().len() != 2 || start + width > src.cols() {
            return Err(NumericError::ShapeMismatch {
                op: "slice_cols",
                lhs: src.shape().to_vec(),
                rhs: vec![start, width],
            });
        }
        let rows = src.rows();
        let mut out = Tensor::zeros(&[rows, width]);
        for r in 0..rows {
            out.row_mut(r).copy_from_slice(&src.row(r)[start..start + width]);
        }
        Ok(self.push(out, Op::SliceCols { a, start, width }))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NumericError> {
        if parts.is_empty() {
            return Err(NumericError::EmptyDistribution);
        }
        let cols = self.value(parts[0]).cols();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.shape().len() != 2 || t.cols() != cols {
                return Err(NumericError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: self.value(parts[0]).shape().to_vec(),
                    rhs: t.shape().to_vec(),
                });
            }
            rows += t.rows();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::from_vec(&[rows, cols], data)?;
        Ok(self.push(out, Op::ConcatRows { parts: parts.to_vec() }))
    }

    /// One output row per group of `group` indices; row = the looked-up table
    /// rows laid side by side. Used for the sample-tier embedding lookup.
    pub fn gather_concat(
        &mut self,
        table: Var,
        indices: &[usize],
        group: usize,
    ) -> Result<Var, NumericError> {
        let tbl = self.value(table);
        if tbl.shape().len() != 2 || group == 0 || indices.len() % group != 0 {
            return Err(NumericError::ShapeMismatch {
                op: "gather_concat",
                lhs: tbl.shape().to_vec(),
                rhs: vec![indices.len(), group],
            });
        }
        let (vocab, width) = (tbl.rows(), tbl.cols());
        if let Some(&bad) = indices.iter().find(|&&i| i >= vocab) {
            return Err(NumericError::IndexOutOfRange { index: bad, bound: vocab });
        }
        let rows = indices.len() / group;
        let mut out = Tensor::zeros(&[rows, group * width]);
        for r in 0..rows {
            let orow = out.row_mut(r);
            for s in 0..group {
                let src = tbl.row(indices[r * group + s]);
                orow[s * width..(s + 1) * width].copy_from_slice(src);
            }
        }
        Ok(self.push(
            out,
            Op::GatherConcat { table, indices: indices.to_vec(), group },
        ))
    }

    /// Effective weight-normalized matrix from direction v[r×c] and gain g[r].
    pub fn weight_norm(&mut self, v: Var, g: Var) -> Result<Var, NumericError> {
        let vt = self.value(v);
        let gt = self.value(g);
        if vt.shape().len() != 2 || gt.shape().len() != 1 || gt.len() != vt.rows() {
            return Err(NumericError::ShapeMismatch {
                op: "weight_norm",
                lhs: vt.shape().to_vec(),
                rhs: gt.shape().to_vec(),
            });
        }
        let mut out = vt.clone();
        for r in 0..out.rows() {
            let norm = l2(self.value(v).row(r));
            if norm == 0.0 {
                return Err(NumericError::ZeroNormRow { row: r });
            }
            let scale = gt.data()[r] / norm;
            for x in out.row_mut(r) {
                *x *= scale;
            }
        }
        Ok(self.push(out, Op::WeightNorm { v, g }))
    }

    /// Scalar mean negative log-likelihood of `targets` under row-wise
    /// softmax of `logits`, stabilized by max-subtraction.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
    ) -> Result<Var, NumericError> {
        let lt = self.value(logits);
        if lt.shape().len() != 2 || targets.len() != lt.rows() {
            return Err(NumericError::ShapeMismatch {
                op: "softmax_cross_entropy",
                lhs: lt.shape().to_vec(),
                rhs: vec![targets.len()],
            });
        }
        let q = lt.cols();
        if let Some(&bad) = targets.iter().find(|&&t| t >= q) {
            return Err(NumericError::IndexOutOfRange { index: bad, bound: q });
        }
        let mut nll = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = lt.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let logsumexp = row.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
            nll += logsumexp - row[t];
        }
        let loss = nll / targets.len() as f64;
        let probs = softmax_rows(lt);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxXent { logits, targets: targets.to_vec(), probs },
        ))
    }

    fn accumulate(&mut self, v: Var, delta: Tensor) {
        match &mut self.grads[v.0] {
            Some(g) => {
                for (gi, di) in g.data_mut().iter_mut().zip(delta.data()) {
                    *gi += di;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    /// Reverse pass from a scalar root; adjoints land in `grad`.
    pub fn backward(&mut self, root: Var) -> Result<(), NumericError> {
        if self.value(root).len() != 1 {
            return Err(NumericError::NonScalarLoss {
                shape: self.value(root).shape().to_vec(),
            });
        }
        for g in &mut self.grads {
            *g = None;
        }
        self.grads[root.0] = Some(Tensor::filled(self.value(root).shape(), 1.0));

        for id in (0..=root.0).rev() {
            let Some(gout) = self.grads[id].clone() else {
                continue;
            };
            match &self.ops[id] {
                Op::Leaf => {}
                Op::MatMul { a, b } => {
                    let (a, b) = (*a, *b);
                    let da = matmul_nt(&gout, self.value(b))?;
                    let db = matmul_tn(self.value(a), &gout)?;
                    self.accumulate(a, da);
                    self.accumulate(b, db);
                }
                Op::MatMulNT { a, b } => {
                    let (a, b) = (*a, *b);
                    let da = matmul(&gout, self.value(b))?;
                    let db = matmul_tn(&gout, self.value(a))?;
                    self.accumulate(a, da);
                    self.accumulate(b, db);
                }
                Op::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    self.accumulate(a, gout.clone());
                    self.accumulate(b, gout);
                }
                Op::AddRowBroadcast { a, bias } => {
                    let (a, bias) = (*a, *bias);
                    let mut db = Tensor::zeros(&[gout.cols()]);
                    for r in 0..gout.rows() {
                        for (d, g) in db.data_mut().iter_mut().zip(gout.row(r)) {
                            *d += g;
                        }
                    }
                    self.accumulate(a, gout);
                    self.accumulate(bias, db);
                }
                Op::Mul { a, b } => {
                    let (a, b) = (*a, *b);
                    let da = mul(&gout, self.value(b))?;
                    let db = mul(&gout, self.value(a))?;
                    self.accumulate(a, da);
                    self.accumulate(b, db);
                }
                Op::Tanh { a } => {
                    let a = *a;
                    let mut da = gout;
                    for (d, y) in da.data_mut().iter_mut().zip(self.values[id].data()) {
                        *d *= 1.0 - y * y;
                    }
                    self.accumulate(a, da);
                }
                Op::Sigmoid { a } => {
                    let a = *a;
                    let mut da = gout;
                    for (d, y) in da.data_mut().iter_mut().zip(self.values[id].data()) {
                        *d *= y * (1.0 - y);
                    }
                    self.accumulate(a, da);
                }
                Op::Relu { a } => {
                    let a = *a;
                    let mut da = gout;
                    // Subgradient at exactly 0 is defined as 0.
                    for (d, x) in da.data_mut().iter_mut().zip(self.value(a).data()) {
                        if *x <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    self.accumulate(a, da);
                }
                Op::SliceCols { a, start, width } => {
                    let (a, start, width) = (*a, *start, *width);
                    let src_shape = self.value(a).shape().to_vec();
                    let mut da = Tensor::zeros(&src_shape);
                    for r in 0..gout.rows() {
                        da.row_mut(r)[start..start + width].copy_from_slice(gout.row(r));
                    }
                    self.accumulate(a, da);
                }
                Op::ConcatRows { parts } => {
                    let parts = parts.clone();
                    let cols = gout.cols();
                    let mut row = 0;
                    for p in parts {
                        let rows = self.value(p).rows();
                        let mut dp = Tensor::zeros(&[rows, cols]);
                        dp.data_mut()
                            .copy_from_slice(&gout.data()[row * cols..(row + rows) * cols]);
                        self.accumulate(p, dp);
                        row += rows;
                    }
                }
                Op::GatherConcat { table, indices, group } => {
                    let (table, group) = (*table, *group);
                    let indices = indices.clone();
                    let width = self.value(table).cols();
                    let mut dt = Tensor::zeros(&[self.value(table).rows(), width]);
                    for r in 0..gout.rows() {
                        let grow = gout.row(r);
                        for s in 0..group {
                            let idx = indices[r * group + s];
                            for (d, g) in dt
                                .row_mut(idx)
                                .iter_mut()
                                .zip(&grow[s * width..(s + 1) * width])
                            {
                                *d += g;
                            }
                        }
                    }
                    self.accumulate(table, dt);
                }
                Op::WeightNorm { v, g } => {
                    let (v, g) = (*v, *g);
                    let vt = self.value(v);
                    let gt = self.value(g);
                    let mut dv = Tensor::zeros(vt.shape());
                    let mut dg = Tensor::zeros(gt.shape());
                    for r in 0..vt.rows() {
                        let vrow = vt.row(r);
                        let grow = gout.row(r);
                        let norm = l2(vrow);
                        let dot: f64 = grow.iter().zip(vrow).map(|(a, b)| a * b).sum();
                        let gain = gt.data()[r];
                        for c in 0..vrow.len() {
                            dv.row_mut(r)[c] =
                                gain * (grow[c] / norm - vrow[c] * dot / (norm * norm * norm));
                        }
                        dg.data_mut()[r] = dot / norm;
                    }
                    self.accumulate(v, dv);
                    self.accumulate(g, dg);
                }
                Op::SoftmaxXent { logits, targets, probs } => {
                    let logits = *logits;
                    let scale = gout.data()[0] / targets.len() as f64;
                    let mut dl = probs.clone();
                    for (r, &t) in targets.clone().iter().enumerate() {
                        dl.row_mut(r)[t] -= 1.0;
                    }
                    for x in dl.data_mut() {
                        *x *= scale;
                    }
                    self.accumulate(logits, dl);
                }
            }
        }
        Ok(())
    }
}

fn l2(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x * x).sum::<f64>().sqrt()
}
