use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major `f64` matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for Matrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        Matrix::from_vec(raw.rows, raw.cols, raw.data)
    }
}

impl From<Matrix> for RawMatrix {
    fn from(m: Matrix) -> Self {
        RawMatrix { rows: m.rows, cols: m.cols, data: m.data }
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Parameter(format!(
                "buffer of length {} cannot hold a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * ncols);
        for r in rows {
            if r.len() != ncols {
                return Err(Error::Parameter("ragged rows".into()));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix { rows: rows.len(), cols: ncols, data })
    }

    /// Builds a matrix whose `j`th column is `columns[j]`.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let nrows = columns.first().map_or(0, Vec::len);
        let mut m = Matrix::zeros(nrows, columns.len());
        for (j, c) in columns.iter().enumerate() {
            if c.len() != nrows {
                return Err(Error::Parameter("ragged columns".into()));
            }
            for (i, v) in c.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        Ok(m)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Matrix::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
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

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) {
        debug_assert_eq!(values.len(), self.rows);
        for (i, v) in values.iter().enumerate() {
            self[(i, j)] = *v;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::dim("matmul", self.shape(), rhs.shape()));
        }
        Ok(self.mm(rhs))
    }

    /// `self * rhs` without the shape check.
    pub(crate) fn mm(&self, rhs: &Matrix) -> Matrix {
        debug_assert_eq!(self.cols, rhs.rows);
        self.mmt(&rhs.transpose())
    }

    /// `selfᵀ * rhs`.
    pub(crate) fn tmm(&self, rhs: &Matrix) -> Matrix {
        debug_assert_eq!(self.rows, rhs.rows);
        self.transpose().mmt(&rhs.transpose())
    }

    /// `self * rhsᵀ`; every entry is a dot product of two contiguous rows.
    pub(crate) fn mmt(&self, rhs: &Matrix) -> Matrix {
        debug_assert_eq!(self.cols, rhs.cols);
        let mut out = vec![0.0; self.rows * rhs.rows];
        kernel::mmt(self, rhs, &mut out);
        Matrix { rows: self.rows, cols: rhs.rows, data: out }
    }

    fn check_same(&self, other: &Matrix, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::dim(op, self.shape(), other.shape()));
        }
        Ok(())
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same(other, "add")?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same(other, "sub")?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same(other, "hadamard")?;
        Ok(self.zip_map(other, |a, b| a * b))
    }

    pub(crate) fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| f(*v)).collect() }
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|v| v * s)
    }

    /// In-place `self += alpha * other`; shapes must agree.
    pub(crate) fn axpy(&mut self, alpha: f64, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn select_columns(&self, indices: &[usize]) -> Result<Matrix> {
        if let Some(&bad) = indices.iter().find(|&&j| j >= self.cols) {
            return Err(Error::Parameter(format!(
                "column index {bad} out of range for {} columns",
                self.cols
            )));
        }
        Ok(Matrix::from_fn(self.rows, indices.len(), |i, j| self[(i, indices[j])]))
    }

    pub fn select_rows(&self, range: std::ops::Range<usize>) -> Matrix {
        let data = self.data[range.start * self.cols..range.end * self.cols].to_vec();
        Matrix { rows: range.len(), cols: self.cols, data }
    }

    pub fn hstack(parts: &[&Matrix]) -> Result<Matrix> {
        let rows = parts.first().map_or(0, |m| m.rows);
        if let Some(bad) = parts.iter().find(|m| m.rows != rows) {
            return Err(Error::dim("hstack", (rows, 0), bad.shape()));
        }
        let cols = parts.iter().map(|m| m.cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for m in parts {
            for i in 0..rows {
                for j in 0..m.cols {
                    out[(i, offset + j)] = m[(i, j)];
                }
            }
            offset += m.cols;
        }
        Ok(out)
    }
}

#[inline]
/// Four interleaved partial sums, combined in a fixed order.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    kernel::dot_block::<1>(a, [b])[0]
}

/// Row-by-row products. The AVX2 build of the same code is picked at run
/// time; both share one summation order, so results are bit-identical.
mod kernel {
    use super::Matrix;

    #[inline(always)]
    #[allow(clippy::needless_range_loop)]
    pub(super) fn dot_block<const R: usize>(a: &[f64], b: [&[f64]; R]) -> [f64; R] {
        let n = a.len();
        assert!(b.iter().all(|r| r.len() == n), "dot operands differ in length");
        let n4 = n - n % 4;
        let mut acc = [[0.0f64; 4]; R];
        let mut c = 0;
        while c < n4 {
            for r in 0..R {
                for l in 0..4 {
                    // SAFETY: c + l < n4 <= n and every operand has length n.
                    unsafe { acc[r][l] += a.get_unchecked(c + l) * b[r].get_unchecked(c + l) };
                }
            }
            c += 4;
        }
        let mut out = [0.0; R];
        for r in 0..R {
            let mut tail = 0.0;
            for c in n4..n {
                tail += a[c] * b[r][c];
            }
            out[r] = (acc[r][0] + acc[r][1]) + (acc[r][2] + acc[r][3]) + tail;
        }
        out
    }

    #[inline(always)]
    fn mmt_body(a: &Matrix, b: &Matrix, out: &mut [f64], dot4: impl Fn(&[f64], [&[f64]; 4]) -> [f64; 4]) {
        let (n, m, k) = (a.rows, b.rows, a.cols);
        fn row(mat: &Matrix, i: usize, k: usize) -> &[f64] {
            &mat.data[i * k..(i + 1) * k]
        }
        for i in 0..n {
            let ar = row(a, i, k);
            let o = &mut out[i * m..(i + 1) * m];
            let mut j = 0;
            while j + 4 <= m {
                let v = dot4(ar, [row(b, j, k), row(b, j + 1, k), row(b, j + 2, k), row(b, j + 3, k)]);
                o[j..j + 4].copy_from_slice(&v);
                j += 4;
            }
            while j < m {
                o[j] = dot_block::<1>(ar, [row(b, j, k)])[0];
                j += 1;
            }
        }
    }

    /// Same arithmetic as [`dot_block`] with `R = 4`: one 4-lane accumulator
    /// per output, separate multiply and add, lanes combined identically.
    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn dot4_avx2(a: &[f64], b: [&[f64]; 4]) -> [f64; 4] {
        use std::arch::x86_64::*;
        let n = a.len();
        assert!(b.iter().all(|r| r.len() == n), "dot operands differ in length");
        let n4 = n - n % 4;
        let mut acc = [_mm256_setzero_pd(); 4];
        let mut c = 0;
        while c < n4 {
            let x = _mm256_loadu_pd(a.as_ptr().add(c));
            for r in 0..4 {
                let y = _mm256_loadu_pd(b[r].as_ptr().add(c));
                acc[r] = _mm256_add_pd(acc[r], _mm256_mul_pd(x, y));
            }
            c += 4;
        }
        let mut out = [0.0; 4];
        for r in 0..4 {
            let mut lanes = [0.0f64; 4];
            _mm256_storeu_pd(lanes.as_mut_ptr(), acc[r]);
            let mut tail = 0.0;
            for c in n4..n {
                tail += a[c] * b[r][c];
            }
            out[r] = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail;
        }
        out
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn mmt_avx2(a: &Matrix, b: &Matrix, out: &mut [f64]) {
        mmt_body(a, b, out, |x, y| dot4_avx2(x, y))
    }

    #[cfg(test)]
    pub(super) fn mmt_portable(a: &Matrix, b: &Matrix, out: &mut [f64]) {
        mmt_body(a, b, out, dot_block::<4>)
    }

    pub(super) fn mmt(a: &Matrix, b: &Matrix, out: &mut [f64]) {
        #[cfg(target_arch = "x86_64")]
        if std::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2, checked just above.
            return unsafe { mmt_avx2(a, b, out) };
        }
        mmt_body(a, b, out, dot_block::<4>)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            let row: Vec<String> = self.row(i).iter().take(8).map(|v| format!("{v:.6}")).collect();
            writeln!(f, "  {}", row.join(", "))?;
        }
        write!(f, "]")
    }
}
