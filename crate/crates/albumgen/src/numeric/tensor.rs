//! Dense row-major f64 tensors and the raw arithmetic the tape ops build on.

use super::NumericError;

/// Dense tensor of 64-bit reals, row-major. Rank 1 and 2 are what the model
/// uses; higher ranks are representable but no op accepts them.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self, NumericError> {
        let n: usize = shape.iter().product();
        if n != data.len() || shape.iter().any(|&d| d == 0) {
            return Err(NumericError::ShapeMismatch {
                op: "from_vec",
                lhs: shape.to_vec(),
                rhs: vec![data.len()],
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn scalar(x: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![x],
        }
    }

    pub fn filled(shape: &[usize], x: f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![x; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Number of rows when viewed as a matrix; rank-1 tensors count as one row.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            1 => 1,
            2 => self.shape[0],
            _ => panic!("rows() on rank-{} tensor", self.shape.len()),
        }
    }

    /// Number of columns when viewed as a matrix.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            1 => self.shape[0],
            2 => self.shape[1],
            _ => panic!("cols() on rank-{} tensor", self.shape.len()),
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.shape == other.shape
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> NumericError {
    NumericError::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

/// C = A · B for A[m×k], B[k×n].
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericError> {
    if a.shape().len() != 2 || b.shape().len() != 2 || a.cols() != b.rows() {
        return Err(shape_err("matmul", a, b));
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = Tensor::zeros(&[m, n]);
    for i in 0..m {
        let arow = a.row(i);
        let orow = out.row_mut(i);
        for p in 0..k {
            let av = arow[p];
            if av == 0.0 {
                continue;
            }
            let brow = b.row(p);
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    Ok(out)
}

/// C = A · Bᵀ for A[m×k], B[n×k]. Rows of B are output units, which keeps
/// weight matrices in [out×in] layout without materialized transposes.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericError> {
    if a.shape().len() != 2 || b.shape().len() != 2 || a.cols() != b.cols() {
        return Err(shape_err("matmul_nt", a, b));
    }
    let (m, k, n) = (a.rows(), a.cols(), b.rows());
    let mut out = Tensor::zeros(&[m, n]);
    for i in 0..m {
        let arow = a.row(i);
        let orow = out.row_mut(i);
        for j in 0..n {
            let brow = b.row(j);
            let mut acc = 0.0;
            for p in 0..k {
                acc += arow[p] * brow[p];
            }
            orow[j] = acc;
        }
    }
    Ok(out)
}

/// C = Aᵀ · B for A[m×k], B[m×n].
pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericError> {
    if a.shape().len() != 2 || b.shape().len() != 2 || a.rows() != b.rows() {
        return Err(shape_err("matmul_tn", a, b));
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = Tensor::zeros(&[k, n]);
    for i in 0..m {
        let arow = a.row(i);
        let brow = b.row(i);
        for p in 0..k {
            let av = arow[p];
            if av == 0.0 {
                continue;
            }
            let orow = out.row_mut(p);
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    Ok(out)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericError> {
    if !a.same_shape(b) {
        return Err(shape_err("add", a, b));
    }
    let mut out = a.clone();
    for (o, x) in out.data_mut().iter_mut().zip(b.data()) {
        *o += x;
    }
    Ok(out)
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericError> {
    if !a.same_shape(b) {
        return Err(shape_err("mul", a, b));
    }
    let mut out = a.clone();
    for (o, x) in out.data_mut().iter_mut().zip(b.data()) {
        *o *= x;
    }
    Ok(out)
}

/// Adds a rank-1 bias of length n to every row of A[m×n].
pub fn add_row_broadcast(a: &Tensor, bias: &Tensor) -> Result<Tensor, NumericError> {
    if a.shape().len() != 2 || bias.shape().len() != 1 || a.cols() != bias.len() {
        return Err(shape_err("add_row_broadcast", a, bias));
    }
    let mut out = a.clone();
    for r in 0..out.rows() {
        for (o, x) in out.row_mut(r).iter_mut().zip(bias.data()) {
            *o += x;
        }
    }
    Ok(out)
}

pub fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let mut out = a.clone();
    for x in out.data_mut() {
        *x = f(*x);
    }
    out
}

/// Row-wise softmax with max-subtraction for stability.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let mut out = logits.clone();
    let cols = out.cols();
    for r in 0..out.rows() {
        let row = &mut out.row_mut(r)[..cols];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        for x in row.iter_mut() {
            *x /= sum;
        }
    }
    out
}
