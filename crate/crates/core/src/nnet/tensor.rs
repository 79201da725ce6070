use serde::{Deserialize, Serialize};

use super::NnError;

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor2D {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2D {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NnError> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(NnError::Shape {
                op: "from_vec",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Single-row tensor. Panics on an empty slice.
    pub fn row_vector(values: &[f64]) -> Self {
        assert!(!values.is_empty(), "row vector must be non-empty");
        Self { rows: 1, cols: values.len(), data: values.to_vec() }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NnError> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * m);
        for r in rows {
            if r.len() != m {
                return Err(NnError::Shape { op: "from_rows", left: (n, m), right: (1, r.len()) });
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(n, m, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
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

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Tensor2D) -> Result<Tensor2D, NnError> {
        if self.cols != other.rows {
            return Err(NnError::Shape { op: "matmul", left: self.shape(), right: other.shape() });
        }
        let mut out = Tensor2D::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let o_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ`.
    pub fn matmul_t(&self, other: &Tensor2D) -> Result<Tensor2D, NnError> {
        if self.cols != other.cols {
            return Err(NnError::Shape { op: "matmul_t", left: self.shape(), right: other.shape() });
        }
        let mut out = Tensor2D::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                let b = other.row(j);
                out.data[i * other.rows + j] = a.iter().zip(b).map(|(x, y)| x * y).sum();
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other`.
    pub fn t_matmul(&self, other: &Tensor2D) -> Result<Tensor2D, NnError> {
        if self.rows != other.rows {
            return Err(NnError::Shape { op: "t_matmul", left: self.shape(), right: other.shape() });
        }
        let mut out = Tensor2D::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = other.row(k);
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let o_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Tensor2D {
        let mut out = Tensor2D::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.get(i, j);
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Tensor2D) -> Result<(), NnError> {
        if self.shape() != other.shape() {
            return Err(NnError::Shape { op: "add_assign", left: self.shape(), right: other.shape() });
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor2D) -> Result<Tensor2D, NnError> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    /// Sum over rows, producing a `1 × cols` tensor.
    pub fn sum_rows(&self) -> Tensor2D {
        let mut out = Tensor2D::zeros(1, self.cols);
        for i in 0..self.rows {
            for (o, v) in out.data.iter_mut().zip(self.row(i)) {
                *o += v;
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor2D {
        Tensor2D { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Tensor2D) -> Tensor2D {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Backward of row-wise softmax given its output `a` and upstream `da`.
pub fn softmax_rows_backward(a: &Tensor2D, da: &Tensor2D) -> Tensor2D {
    let mut ds = Tensor2D::zeros(a.rows(), a.cols());
    for r in 0..a.rows() {
        let ar = a.row(r);
        let dar = da.row(r);
        let dot: f64 = ar.iter().zip(dar).map(|(x, y)| x * y).sum();
        for (c, o) in ds.row_mut(r).iter_mut().enumerate() {
            *o = ar[c] * (dar[c] - dot);
        }
    }
    ds
}
