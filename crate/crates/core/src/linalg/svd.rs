//! Thin singular value decomposition by one-sided (Hestenes) Jacobi rotations.
//!
//! Jacobi is slower than Golub–Kahan for large matrices but it is accurate to
//! working precision on small singular values, which the rank checks and the
//! gradient of the truncation rely on. Latent matrices here are at most a few
//! hundred rows by a few dozen columns.

use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;
const ORTHO_TOL: f64 = 1e-15;

/// `a = u * diag(sigma) * vt` with `r = min(m, n)` retained triplets.
#[derive(Debug, Clone)]
pub struct Svd {
    /// m×r, orthonormal columns.
    pub u: Matrix,
    /// Non-negative and sorted descending.
    pub sigma: Vec<f64>,
    /// r×n, orthonormal rows.
    pub vt: Matrix,
}

impl Svd {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `sum_{i<k} sigma_i u_i v_iᵀ`.
    pub fn reconstruct(&self, k: usize) -> Matrix {
        let k = k.min(self.sigma.len());
        let (m, n) = (self.u.rows(), self.vt.cols());
        let mut out = Matrix::zeros(m, n);
        for i in 0..m {
            let row = &mut out.as_mut_slice()[i * n..(i + 1) * n];
            for t in 0..k {
                let coef = self.u[(i, t)] * self.sigma[t];
                if coef == 0.0 {
                    continue;
                }
                for (o, v) in row.iter_mut().zip(self.vt.row(t)) {
                    *o += coef * v;
                }
            }
        }
        out
    }
}

pub fn svd(a: &Matrix) -> Result<Svd> {
    if !a.is_finite() {
        return Err(Error::Parameter("svd input contains non-finite entries".into()));
    }
    let mut out = if a.rows() >= a.cols() {
        let (u, sigma, v) = jacobi_tall(a)?;
        Svd { u, sigma, vt: v.transpose() }
    } else {
        // aᵀ = u s vᵀ  =>  a = v s uᵀ
        let (u, sigma, v) = jacobi_tall(&a.transpose())?;
        Svd { u: v, sigma, vt: u.transpose() }
    };
    fix_signs(&mut out);
    Ok(out)
}

pub fn singular_values(a: &Matrix) -> Result<Vec<f64>> {
    Ok(svd(a)?.sigma)
}

/// Best rank-`k` approximation in the Frobenius norm.
pub fn truncate(a: &Matrix, k: usize) -> Result<Matrix> {
    let r = a.rows().min(a.cols());
    if k == 0 || k > r {
        return Err(Error::Parameter(format!("truncation rank {k} outside 1..={r}")));
    }
    Ok(svd(a)?.reconstruct(k))
}

/// Returns `(u, sigma, v)` for `a` with `rows >= cols`; `v` is square.
fn jacobi_tall(a: &Matrix) -> Result<(Matrix, Vec<f64>, Matrix)> {
    let (m, n) = a.shape();
    debug_assert!(m >= n);
    // column-major working copies
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    let mut converged = n < 2;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(Error::Numerical { what: "jacobi svd", iterations: sweeps });
        }
        sweeps += 1;
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if alpha == 0.0 || beta == 0.0 || gamma.abs() <= ORTHO_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta == 0.0 {
                    1.0
                } else {
                    zeta.signum() / (zeta.abs() + 1f64.hypot(zeta))
                };
                let c = 1.0 / 1f64.hypot(t);
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut vcols, p, q, c, s);
            }
        }
        converged = !rotated;
    }

    let norms: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal values keep their computed order
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let mut ucols: Vec<Vec<f64>> = Vec::with_capacity(n);
    for &j in &order {
        let s = norms[j];
        let mut u: Vec<f64> = if s > 0.0 { cols[j].iter().map(|x| x / s).collect() } else { vec![0.0; m] };
        if !orthonormalize_against(&mut u, &ucols) {
            u = complete_basis(&ucols, m);
        }
        ucols.push(u);
    }

    let u = Matrix::from_columns(&ucols)?;
    let vsorted: Vec<Vec<f64>> = order.iter().map(|&j| vcols[j].clone()).collect();
    let v = Matrix::from_columns(&vsorted)?;
    Ok((u, sigma, v))
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let (cp, cq) = (&mut left[p], &mut right[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Two passes of modified Gram–Schmidt. Returns false if `u` collapsed.
fn orthonormalize_against(u: &mut [f64], basis: &[Vec<f64>]) -> bool {
    let start = dot(u, u).sqrt();
    if start == 0.0 {
        return false;
    }
    for _ in 0..2 {
        for b in basis {
            let proj = dot(u, b);
            for (x, y) in u.iter_mut().zip(b) {
                *x -= proj * y;
            }
        }
    }
    let norm = dot(u, u).sqrt();
    if norm < 1e-8 * start {
        return false;
    }
    u.iter_mut().for_each(|x| *x /= norm);
    true
}

/// Unit vector orthogonal to `basis`, built from the standard basis vector
/// with the largest residual.
fn complete_basis(basis: &[Vec<f64>], m: usize) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for i in 0..m {
        let mut e = vec![0.0; m];
        e[i] = 1.0;
        for b in basis {
            let proj = b[i];
            for (x, y) in e.iter_mut().zip(b) {
                *x -= proj * y;
            }
        }
        let norm = dot(&e, &e).sqrt();
        if best.as_ref().is_none_or(|(n, _)| norm > *n + 1e-12) {
            best = Some((norm, e));
        }
        if norm > 0.7 {
            break;
        }
    }
    let (_, mut e) = best.expect("basis completion needs m > rank");
    let ok = orthonormalize_against(&mut e, basis);
    debug_assert!(ok);
    e
}

/// First entry of each left singular vector with |u| > 1e-12 is made positive.
fn fix_signs(s: &mut Svd) {
    let (m, r) = s.u.shape();
    for j in 0..r {
        let lead = (0..m).map(|i| s.u[(i, j)]).find(|v| v.abs() > 1e-12);
        if matches!(lead, Some(v) if v < 0.0) {
            for i in 0..m {
                s.u[(i, j)] = -s.u[(i, j)];
            }
            for c in 0..s.vt.cols() {
                s.vt[(j, c)] = -s.vt[(j, c)];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ortho_err(q: &Matrix) -> f64 {
        let g = q.tmm(q);
        g.sub(&Matrix::identity(g.rows())).unwrap().frobenius_norm()
    }

    #[test]
    fn diagonal() {
        let s = svd(&Matrix::diag(&[3.0, 1.0])).unwrap();
        assert_eq!(s.sigma, vec![3.0, 1.0]);
    }

    #[test]
    fn diagonal_out_of_order_is_sorted() {
        let s = svd(&Matrix::diag(&[1.0, 3.0, 2.0])).unwrap();
        assert_eq!(s.sigma, vec![3.0, 2.0, 1.0]);
        assert!(ortho_err(&s.u) < 1e-14);
    }

    #[test]
    fn zero_matrix_has_orthonormal_factors() {
        let s = svd(&Matrix::zeros(3, 2)).unwrap();
        assert_eq!(s.sigma, vec![0.0, 0.0]);
        assert!(ortho_err(&s.u) < 1e-14);
        assert!(ortho_err(&s.vt.transpose()) < 1e-14);
    }

    #[test]
    fn rank_deficient_wide() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0, 3.0, 4.0], vec![2.0, 4.0, 6.0, 8.0]]).unwrap();
        let s = svd(&a).unwrap();
        assert!(s.sigma[1] < 1e-12 * s.sigma[0]);
        assert!(ortho_err(&s.u) < 1e-12);
        let back = s.reconstruct(2);
        assert!(back.sub(&a).unwrap().frobenius_norm() < 1e-12 * a.frobenius_norm());
    }

    #[test]
    fn sign_convention() {
        let a = Matrix::from_rows(&[vec![-2.0, 0.0], vec![0.0, -1.0], vec![0.0, 0.0]]).unwrap();
        let s = svd(&a).unwrap();
        for j in 0..2 {
            let lead = (0..3).map(|i| s.u[(i, j)]).find(|v| v.abs() > 1e-12).unwrap();
            assert!(lead > 0.0);
        }
        assert!(s.reconstruct(2).sub(&a).unwrap().frobenius_norm() < 1e-14);
    }

    #[test]
    fn truncate_rejects_bad_rank() {
        let a = Matrix::identity(3);
        assert!(truncate(&a, 0).is_err());
        assert!(truncate(&a, 4).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        let mut a = Matrix::identity(2);
        a[(0, 1)] = f64::NAN;
        assert!(svd(&a).is_err());
    }
}
