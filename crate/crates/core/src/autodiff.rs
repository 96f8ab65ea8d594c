//! Tape-based reverse-mode differentiation over [`Matrix`] values.
//!
//! Every operation appends one entry to the tape, so entry order is already a
//! topological order; [`Tape::backward`] walks it once from the output down to
//! the first entry and accumulates into per-entry gradients.
//!
//! ```
//! use rrae::{autodiff::Tape, linalg::Matrix};
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Matrix::filled(1, 1, 3.0));
//! let y = tape.add(x, x).unwrap();
//! let grads = tape.backward(y);
//! assert_eq!(grads.wrt(x)[(0, 0)], 2.0);
//! ```

use log::warn;

use crate::error::{Error, Result};
use crate::linalg::{svd, Matrix};

/// Relative spectral gap below which truncation is reported as degenerate.
pub const GAP_TOLERANCE: f64 = 1e-12;
/// Smallest magnitude allowed for `sigma_j^2 - sigma_i^2` in the SVD adjoint.
pub const EPS_GAP: f64 = 1e-12;

/// Handle to a tape entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Node(usize);

impl Node {
    pub fn id(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul(Node, Node),
    Add(Node, Node),
    Sub(Node, Node),
    Mul(Node, Node),
    Scale(Node, f64),
    AddBias(Node, Node),
    Softplus(Node),
    Relu(Node),
    Sum(Node),
    Frobenius(Node),
    ColumnSlice(Node, Vec<usize>),
    Truncated(Node, Box<TruncCache>),
    Nuclear(Node, Box<(Matrix, Matrix)>),
}

/// Factors of the tall orientation of a truncated input.
struct TruncCache {
    transposed: bool,
    k: usize,
    u: Matrix,
    sigma: Vec<f64>,
    v: Matrix,
}

struct Entry {
    value: Matrix,
    op: Op,
}

/// A single-threaded recording of one forward pass.
#[derive(Default)]
pub struct Tape {
    entries: Vec<Entry>,
}

/// Gradients produced by one backward pass, indexed by [`Node`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn get(&self, node: Node) -> Option<&Matrix> {
        self.grads.get(node.0).and_then(Option::as_ref)
    }

    /// Gradient of `node`, or zeros when the output did not depend on it.
    pub fn wrt(&self, node: Node) -> Matrix {
        self.get(node).cloned().unwrap_or_else(|| {
            let (r, c) = self.shapes[node.0];
            Matrix::zeros(r, c)
        })
    }

    pub fn take(&mut self, node: Node) -> Matrix {
        let (r, c) = self.shapes[node.0];
        self.grads[node.0].take().unwrap_or_else(|| Matrix::zeros(r, c))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Node {
        self.entries.push(Entry { value, op });
        Node(self.entries.len() - 1)
    }

    pub fn leaf(&mut self, value: Matrix) -> Node {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, node: Node) -> &Matrix {
        &self.entries[node.0].value
    }

    pub fn shape(&self, node: Node) -> (usize, usize) {
        self.value(node).shape()
    }

    pub fn scalar(&self, node: Node) -> f64 {
        self.value(node)[(0, 0)]
    }

    pub fn matmul(&mut self, a: Node, b: Node) -> Result<Node> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Node, b: Node) -> Result<Node> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Node, b: Node) -> Result<Node> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Node, b: Node) -> Result<Node> {
        let v = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Node, s: f64) -> Node {
        let v = self.value(a).scale(s);
        self.push(v, Op::Scale(a, s))
    }

    /// `x + b 1ᵀ` for a column vector `b` with `x.rows()` entries.
    pub fn add_bias(&mut self, x: Node, b: Node) -> Result<Node> {
        let (xv, bv) = (self.value(x), self.value(b));
        if bv.cols() != 1 || bv.rows() != xv.rows() {
            return Err(Error::dim("add_bias", xv.shape(), bv.shape()));
        }
        let v = Matrix::from_fn(xv.rows(), xv.cols(), |i, j| xv[(i, j)] + bv[(i, 0)]);
        Ok(self.push(v, Op::AddBias(x, b)))
    }

    pub fn softplus(&mut self, a: Node) -> Node {
        let v = self.value(a).map(softplus);
        self.push(v, Op::Softplus(a))
    }

    pub fn relu(&mut self, a: Node) -> Node {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    /// Sum of all entries as a 1×1 node.
    pub fn sum(&mut self, a: Node) -> Node {
        let v = Matrix::filled(1, 1, self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn frobenius_norm(&mut self, a: Node) -> Node {
        let v = Matrix::filled(1, 1, self.value(a).frobenius_norm());
        self.push(v, Op::Frobenius(a))
    }

    /// Columns `indices` of `a`; the backward pass scatters into those columns only.
    pub fn column_slice(&mut self, a: Node, indices: &[usize]) -> Result<Node> {
        let v = self.value(a).select_columns(indices)?;
        Ok(self.push(v, Op::ColumnSlice(a, indices.to_vec())))
    }

    /// Best rank-`k` approximation `sum_{i<=k} sigma_i u_i v_iᵀ`, differentiable
    /// through the SVD.
    pub fn truncated_reconstruct(&mut self, a: Node, k: usize) -> Result<Node> {
        let av = self.value(a);
        let r = av.rows().min(av.cols());
        if k == 0 || k > r {
            return Err(Error::Parameter(format!(
                "truncation rank {k} outside 1..={r} for a {:?} matrix",
                av.shape()
            )));
        }
        let transposed = av.rows() < av.cols();
        let tall = if transposed { av.transpose() } else { av.clone() };
        let s = svd(&tall)?;
        if k < r {
            let gap = s.sigma[k - 1] - s.sigma[k];
            if gap <= GAP_TOLERANCE * s.sigma[0] {
                warn!(
                    "degenerate spectrum at truncation rank {k}: sigma_k={:e}, sigma_k+1={:e}",
                    s.sigma[k - 1],
                    s.sigma[k]
                );
            }
        }
        let rec = s.reconstruct(k);
        let value = if transposed { rec.transpose() } else { rec };
        let cache = TruncCache { transposed, k, u: s.u, sigma: s.sigma, v: s.vt.transpose() };
        Ok(self.push(value, Op::Truncated(a, Box::new(cache))))
    }

    /// Sum of singular values as a 1×1 node.
    pub fn nuclear_norm(&mut self, a: Node) -> Result<Node> {
        let s = svd(self.value(a))?;
        let total: f64 = s.sigma.iter().sum();
        let cutoff = s.sigma.first().copied().unwrap_or(0.0) * f64::EPSILON * 4.0;
        let keep = s.sigma.iter().take_while(|&&x| x > cutoff).count();
        let u = s.u.select_columns(&(0..keep).collect::<Vec<_>>())?;
        let vt = s.vt.select_rows(0..keep);
        Ok(self.push(Matrix::filled(1, 1, total), Op::Nuclear(a, Box::new((u, vt)))))
    }

    /// Reverse sweep seeded with ones of the output's shape.
    pub fn backward(&self, output: Node) -> Gradients {
        let n = output.0 + 1;
        let mut grads: Vec<Option<Matrix>> = (0..n).map(|_| None).collect();
        let (r, c) = self.value(output).shape();
        grads[output.0] = Some(Matrix::filled(r, c, 1.0));

        for idx in (0..n).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let entry = &self.entries[idx];
            match &entry.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.mmt(self.value(*b));
                    let gb = self.value(*a).tmm(&g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.scale(-1.0));
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.value(*b), |x, y| x * y);
                    let gb = g.zip_map(self.value(*a), |x, y| x * y);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, s) => accumulate(&mut grads, *a, g.scale(*s)),
                Op::AddBias(x, b) => {
                    let gb = Matrix::from_fn(g.rows(), 1, |i, _| g.row(i).iter().sum());
                    accumulate(&mut grads, *b, gb);
                    accumulate(&mut grads, *x, g.clone());
                }
                Op::Softplus(a) => {
                    let ga = g.zip_map(self.value(*a), |gv, x| gv * sigmoid(x));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let ga = g.zip_map(self.value(*a), |gv, x| if x > 0.0 { gv } else { 0.0 });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let (r, c) = self.shape(*a);
                    accumulate(&mut grads, *a, Matrix::filled(r, c, g[(0, 0)]));
                }
                Op::Frobenius(a) => {
                    let norm = entry.value[(0, 0)];
                    let ga = if norm > 0.0 {
                        self.value(*a).scale(g[(0, 0)] / norm)
                    } else {
                        let (r, c) = self.shape(*a);
                        Matrix::zeros(r, c)
                    };
                    accumulate(&mut grads, *a, ga);
                }
                Op::ColumnSlice(a, indices) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Matrix::zeros(r, c);
                    for (j, &src) in indices.iter().enumerate() {
                        for i in 0..r {
                            ga[(i, src)] += g[(i, j)];
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Truncated(a, cache) => {
                    let ga = truncation_adjoint(cache, &g);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Nuclear(a, factors) => {
                    let (u, vt) = factors.as_ref();
                    let ga = u.mm(vt).scale(g[(0, 0)]);
                    accumulate(&mut grads, *a, ga);
                }
            }
            grads[idx] = Some(g);
        }

        let shapes = self.entries.iter().map(|e| e.value.shape()).collect();
        Gradients { grads, shapes }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], node: Node, g: Matrix) {
    match &mut grads[node.0] {
        Some(existing) => existing.axpy(1.0, &g),
        slot @ None => *slot = Some(g),
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn safe_inv(d: f64) -> f64 {
    if d.abs() >= EPS_GAP {
        1.0 / d
    } else if d < 0.0 {
        -1.0 / EPS_GAP
    } else {
        1.0 / EPS_GAP
    }
}

/// Vector-Jacobian product of `a -> sum_{i<k} sigma_i u_i v_iᵀ`.
///
/// With the thin SVD `a = U S Vᵀ` (U: m×n, V: n×n, m >= n) and cotangents
/// `Ū = G V_k S_k`, `V̄ = Gᵀ U_k S_k`, `S̄_i = u_iᵀ G v_i` (zero past `k`):
///
/// `Ā = U [ (F∘(UᵀŪ − ŪᵀU)) S + diag(S̄) + S (F∘(VᵀV̄ − V̄ᵀV)) ] Vᵀ
///      + (I − U Uᵀ) Ū_k S_k⁻¹ V_kᵀ`
///
/// where `F_ij = 1/(sigma_j² − sigma_i²)` off the diagonal.
fn truncation_adjoint(cache: &TruncCache, g_out: &Matrix) -> Matrix {
    let g = if cache.transposed { g_out.transpose() } else { g_out.clone() };
    let TruncCache { k, u, sigma, v, .. } = cache;
    let k = *k;
    let (m, n) = (u.rows(), v.rows());

    let keep: Vec<usize> = (0..k).collect();
    let uk = u.select_columns(&keep).expect("k <= n");
    let vk = v.select_columns(&keep).expect("k <= n");

    // G V_k and Gᵀ U_k, then scale by sigma_k.
    let gv = g.mm(&vk);
    let gtu = g.tmm(&uk);

    let mut u_bar = Matrix::zeros(m, n);
    let mut v_bar = Matrix::zeros(n, n);
    for j in 0..k {
        for i in 0..m {
            u_bar[(i, j)] = gv[(i, j)] * sigma[j];
        }
        for i in 0..n {
            v_bar[(i, j)] = gtu[(i, j)] * sigma[j];
        }
    }
    let s_bar: Vec<f64> = (0..n).map(|i| if i < k { (0..m).map(|r| u[(r, i)] * gv[(r, i)]).sum() } else { 0.0 }).collect();

    let j_mat = u.tmm(&u_bar);
    let k_mat = v.tmm(&v_bar);
    let mut inner = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                inner[(i, i)] = s_bar[i];
                continue;
            }
            let f = safe_inv(sigma[j] * sigma[j] - sigma[i] * sigma[i]);
            let left = f * (j_mat[(i, j)] - j_mat[(j, i)]) * sigma[j];
            let right = sigma[i] * f * (k_mat[(i, j)] - k_mat[(j, i)]);
            inner[(i, j)] = left + right;
        }
    }
    let mut a_bar = u.mm(&inner).mmt(v);

    if m > n {
        // (I - U Uᵀ) Ū_k S_k⁻¹ V_kᵀ
        let mut w = u_bar.select_columns(&keep).expect("k <= n");
        let proj = u.mm(&u.tmm(&w));
        w.axpy(-1.0, &proj);
        for j in 0..k {
            let inv = safe_inv(sigma[j]);
            for i in 0..m {
                w[(i, j)] *= inv;
            }
        }
        a_bar.axpy(1.0, &w.mmt(&vk));
    }

    if cache.transposed {
        a_bar.transpose()
    } else {
        a_bar
    }
}
