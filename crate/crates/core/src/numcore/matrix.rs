//! Dense row-major `f64` matrix.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        if self.rows > 8 {
            writeln!(f, "  ...")?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim("Matrix::from_vec", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::dim("Matrix::from_rows", cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn row_vector(v: &[f64]) -> Self {
        Self {
            rows: 1,
            cols: v.len(),
            data: v.to_vec(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
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

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, so fall back to an empty iterator of the right length
        let cols = self.cols.max(1);
        let n = if self.cols == 0 { 0 } else { self.rows };
        self.data.chunks_exact(cols).take(n)
    }

    /// Appends a row. An empty 0x0 matrix adopts the row's width.
    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if self.rows == 0 && self.cols == 0 {
            self.cols = row.len();
        }
        if row.len() != self.cols {
            return Err(Error::dim("Matrix::push_row", self.cols, row.len()));
        }
        self.data.extend_from_slice(row);
        self.rows += 1;
        Ok(())
    }

    /// Stacks matrices vertically.
    pub fn vstack(parts: &[&Matrix]) -> Result<Self> {
        let cols = parts.first().map_or(0, |m| m.cols);
        let mut out = Self::zeros(0, cols);
        for p in parts {
            if p.cols != cols {
                return Err(Error::dim("Matrix::vstack", cols, p.cols));
            }
            out.data.extend_from_slice(&p.data);
            out.rows += p.rows;
        }
        Ok(out)
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Column range `[start, end)` as a new matrix.
    pub fn cols_range(&self, start: usize, end: usize) -> Self {
        let w = end - start;
        let mut data = Vec::with_capacity(self.rows * w);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..end]);
        }
        Self {
            rows: self.rows,
            cols: w,
            data,
        }
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::dim("matmul", self.cols, other.rows));
        }
        let (m, kk, n) = (self.rows, self.cols, other.cols);
        let mut out = Self::zeros(m, n);
        if n == 0 {
            return Ok(out);
        }
        // four output rows at a time so each row of `other` is loaded once
        // per block
        let mut blocks = out.data.chunks_exact_mut(4 * n);
        let mut i = 0;
        for block in &mut blocks {
            let (o0, rest) = block.split_at_mut(n);
            let (o1, rest) = rest.split_at_mut(n);
            let (o2, o3) = rest.split_at_mut(n);
            let a = &self.data[i * kk..(i + 4) * kk];
            for k in 0..kk {
                let (a0, a1, a2, a3) = (a[k], a[kk + k], a[2 * kk + k], a[3 * kk + k]);
                let b = &other.data[k * n..(k + 1) * n];
                for j in 0..n {
                    let bj = b[j];
                    o0[j] += a0 * bj;
                    o1[j] += a1 * bj;
                    o2[j] += a2 * bj;
                    o3[j] += a3 * bj;
                }
            }
            i += 4;
        }
        for o_row in blocks.into_remainder().chunks_exact_mut(n) {
            let a_row = &self.data[i * kk..(i + 1) * kk];
            for (k, &a) in a_row.iter().enumerate() {
                let b_row = &other.data[k * n..(k + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
            i += 1;
        }
        Ok(out)
    }

    /// `selfᵀ · other`.
    pub fn matmul_tn(&self, other: &Matrix) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::dim("matmul_tn", self.rows, other.rows));
        }
        let (m, n) = (self.cols, other.cols);
        let mut out = Self::zeros(m, n);
        if n == 0 || m == 0 {
            return Ok(out);
        }
        let rows = self.rows;
        let mut r = 0;
        while r + 4 <= rows {
            let (b0, b1, b2, b3) = (other.row(r), other.row(r + 1), other.row(r + 2), other.row(r + 3));
            let (a0, a1, a2, a3) = (self.row(r), self.row(r + 1), self.row(r + 2), self.row(r + 3));
            for i in 0..m {
                let (c0, c1, c2, c3) = (a0[i], a1[i], a2[i], a3[i]);
                let o = &mut out.data[i * n..(i + 1) * n];
                for j in 0..n {
                    o[j] += c0 * b0[j] + c1 * b1[j] + c2 * b2[j] + c3 * b3[j];
                }
            }
            r += 4;
        }
        for r in r..rows {
            let (a_row, b_row) = (self.row(r), other.row(r));
            for (i, &a) in a_row.iter().enumerate() {
                let o = &mut out.data[i * n..(i + 1) * n];
                for (o, &b) in o.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ`.
    pub fn matmul_nt(&self, other: &Matrix) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::dim("matmul_nt", self.cols, other.cols));
        }
        // row-times-row dot products do not vectorize; the explicit
        // transpose keeps the inner loop an axpy
        self.matmul(&other.transpose())
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::dim(
                "Matrix::add_assign",
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sub(&self, other: &Matrix) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::dim(
                "Matrix::sub",
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Per-column mean.
    pub fn col_means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.cols];
        for row in self.iter_rows() {
            for (a, v) in m.iter_mut().zip(row) {
                *a += v;
            }
        }
        let n = self.rows.max(1) as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}
