#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rrae::linalg::Matrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn from_na(m: &DMatrix<f64>) -> Matrix {
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Singular values from the eigenvalues of AᵀA (or AAᵀ), descending.
pub fn oracle_singular_values(m: &Matrix) -> Vec<f64> {
    let a = to_na(m);
    let gram = if a.nrows() >= a.ncols() { a.transpose() * &a } else { &a * a.transpose() };
    let mut ev: Vec<f64> = gram.symmetric_eigenvalues().iter().map(|v| v.max(0.0).sqrt()).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Singular values via nalgebra's bidiagonalization SVD, descending.
pub fn oracle_svd_values(m: &Matrix) -> Vec<f64> {
    let mut s: Vec<f64> = to_na(m).singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Random orthogonal n×n matrix from the QR factorization of a uniform matrix.
pub fn random_orthogonal(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    g.qr().q()
}

/// m×n matrix with prescribed singular values (length min(m, n)).
pub fn with_spectrum(rng: &mut impl Rng, m: usize, n: usize, sigma: &[f64]) -> Matrix {
    let q1 = random_orthogonal(rng, m);
    let q2 = random_orthogonal(rng, n);
    let mut s = DMatrix::zeros(m, n);
    for (i, v) in sigma.iter().enumerate() {
        s[(i, i)] = *v;
    }
    from_na(&(q1 * s * q2.transpose()))
}

/// Central finite-difference gradient of a scalar function of a matrix.
pub fn fd_gradient(x: &Matrix, step: f64, f: impl Fn(&Matrix) -> f64) -> Matrix {
    let mut g = Matrix::zeros(x.rows(), x.cols());
    let mut probe = x.clone();
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            let orig = probe[(i, j)];
            probe[(i, j)] = orig + step;
            let up = f(&probe);
            probe[(i, j)] = orig - step;
            let down = f(&probe);
            probe[(i, j)] = orig;
            g[(i, j)] = (up - down) / (2.0 * step);
        }
    }
    g
}

pub fn rel_err(got: &Matrix, want: &Matrix) -> f64 {
    let diff = got.sub(want).unwrap().frobenius_norm();
    diff / want.frobenius_norm().max(1e-300)
}
