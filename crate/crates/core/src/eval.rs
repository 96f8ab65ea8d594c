//! Coefficient interpolation over the parameter space, decoding, and the
//! error, rank and entropy metrics.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ParamSet};
use crate::error::{Error, Result};
use crate::io::{write_atomic, write_records_csv};
use crate::linalg::{singular_values, Matrix};
use crate::models::{LatentFactorization, ModelState};

pub const RANK_TOLERANCE: f64 = 1e-6;
/// Slack allowed when deciding whether a query lies inside the training box.
const HULL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpMode {
    Linear1d,
    Bilinear2d,
}

/// Training coefficients laid out on the training parameter grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMap {
    mode: InterpMode,
    /// Sorted unique knots per dimension.
    axes: Vec<Vec<f64>>,
    /// `coeffs` column for each grid node, first axis slowest.
    node_columns: Vec<usize>,
    coeffs: Matrix,
}

fn sorted_unique(vals: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = vals.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn locate(axis: &[f64], x: f64) -> Option<(usize, f64)> {
    let (lo, hi) = (axis[0], axis[axis.len() - 1]);
    let slack = HULL_SLACK * (hi - lo).abs().max(1.0);
    if !(x >= lo - slack && x <= hi + slack) {
        return None;
    }
    if axis.len() == 1 {
        return Some((0, 0.0));
    }
    let x = x.clamp(lo, hi);
    let i = axis.partition_point(|&a| a <= x).clamp(1, axis.len() - 1) - 1;
    let w = (x - axis[i]) / (axis[i + 1] - axis[i]);
    Some((i, w))
}

impl CoefficientMap {
    /// `params[d]` is the parameter vector of `coeffs` column `d`.
    pub fn new(params: &[Vec<f64>], coeffs: Matrix) -> Result<Self> {
        if params.len() != coeffs.cols() {
            return Err(Error::Parameter(format!("{} parameters for {} coefficient columns", params.len(), coeffs.cols())));
        }
        let dims = params.first().map_or(0, Vec::len);
        if params.iter().any(|p| p.len() != dims) {
            return Err(Error::Parameter("parameter vectors of mixed dimension".into()));
        }
        let axes: Vec<Vec<f64>> = (0..dims).map(|k| sorted_unique(params.iter().map(|p| p[k]))).collect();
        let mode = match dims {
            1 => InterpMode::Linear1d,
            2 => InterpMode::Bilinear2d,
            n => return Err(Error::Parameter(format!("interpolation supports 1 or 2 parameters, got {n}"))),
        };
        let nodes: usize = axes.iter().map(Vec::len).product();
        if nodes != params.len() {
            return Err(Error::Parameter(format!(
                "training parameters do not form a complete grid ({} points, {nodes} grid nodes)",
                params.len()
            )));
        }
        let mut node_columns = vec![usize::MAX; nodes];
        for (col, p) in params.iter().enumerate() {
            let mut flat = 0;
            for (k, axis) in axes.iter().enumerate() {
                let i = axis.partition_point(|&a| a < p[k]);
                flat = flat * axis.len() + i;
            }
            if node_columns[flat] != usize::MAX {
                return Err(Error::Parameter(format!("duplicate training parameter {p:?}")));
            }
            node_columns[flat] = col;
        }
        Ok(CoefficientMap { mode, axes, node_columns, coeffs })
    }

    pub fn from_params(params: &ParamSet, coeffs: Matrix) -> Result<Self> {
        Self::new(&params.train, coeffs)
    }

    pub fn mode(&self) -> InterpMode {
        self.mode
    }

    pub fn rank(&self) -> usize {
        self.coeffs.rows()
    }

    fn node(&self, idx: &[usize]) -> Vec<f64> {
        let flat = match idx {
            [i] => *i,
            [i, j] => i * self.axes[1].len() + j,
            _ => unreachable!(),
        };
        self.coeffs.column(self.node_columns[flat])
    }

    /// Coefficient vector at `p`. Queries outside the training box are refused.
    pub fn interpolate(&self, p: &[f64]) -> Result<Vec<f64>> {
        if p.len() != self.axes.len() {
            return Err(Error::Parameter(format!("query has {} parameters, map has {}", p.len(), self.axes.len())));
        }
        let cells: Option<Vec<(usize, f64)>> = self.axes.iter().zip(p).map(|(a, &x)| locate(a, x)).collect();
        let cells = cells.ok_or_else(|| Error::Extrapolation { query: p.to_vec() })?;
        let mix = |a: Vec<f64>, b: Vec<f64>, w: f64| -> Vec<f64> {
            if w == 0.0 {
                return a;
            }
            if w == 1.0 {
                return b;
            }
            a.iter().zip(&b).map(|(x, y)| (1.0 - w) * x + w * y).collect()
        };
        let next = |i: usize, axis: usize| (i + 1).min(self.axes[axis].len() - 1);
        Ok(match self.mode {
            InterpMode::Linear1d => {
                let (i, w) = cells[0];
                mix(self.node(&[i]), self.node(&[next(i, 0)]), w)
            }
            InterpMode::Bilinear2d => {
                let ((i, wi), (j, wj)) = (cells[0], cells[1]);
                let (i1, j1) = (next(i, 0), next(j, 1));
                let lo = mix(self.node(&[i, j]), self.node(&[i, j1]), wj);
                let hi = mix(self.node(&[i1, j]), self.node(&[i1, j1]), wj);
                mix(lo, hi, wi)
            }
        })
    }
}

/// Interpolated coefficients for each query, as columns of a k×N matrix.
pub fn interpolate_coeffs(map: &CoefficientMap, queries: &[Vec<f64>]) -> Result<Matrix> {
    let cols = queries.iter().map(|q| map.interpolate(q)).collect::<Result<Vec<_>>>()?;
    if cols.is_empty() {
        return Ok(Matrix::zeros(map.rank(), 0));
    }
    Matrix::from_columns(&cols)
}

/// Decoder applied to `U α`, then denormalized.
pub fn decode_coeffs(state: &ModelState, u: &Matrix, alpha: &Matrix) -> Result<Matrix> {
    let latent = u.matmul(alpha)?;
    let out = state.decode_matrix(&latent)?;
    state.norm.invert(&out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMetric {
    /// Mean over columns of `||x - x̂|| / ||x||`.
    #[default]
    PerColumn,
    /// `||X - X̂||_F / ||X||_F`.
    Global,
}

/// Per-column relative errors in percent; `None` for zero-norm truth columns.
pub fn column_errors(truth: &Matrix, pred: &Matrix) -> Result<Vec<Option<f64>>> {
    if truth.shape() != pred.shape() {
        return Err(Error::dim("relative_error", truth.shape(), pred.shape()));
    }
    Ok((0..truth.cols())
        .map(|j| {
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..truth.rows() {
                let t = truth[(i, j)];
                let d = t - pred[(i, j)];
                num += d * d;
                den += t * t;
            }
            (den > 0.0).then(|| 100.0 * (num / den).sqrt())
        })
        .collect())
}

/// Relative error in percent.
pub fn relative_error(truth: &Matrix, pred: &Matrix, metric: ErrorMetric) -> Result<f64> {
    match metric {
        ErrorMetric::PerColumn => {
            let errs = column_errors(truth, pred)?;
            let skipped = errs.iter().filter(|e| e.is_none()).count();
            if skipped > 0 {
                log::warn!("{skipped} zero-norm columns excluded from the relative error");
            }
            let kept: Vec<f64> = errs.into_iter().flatten().collect();
            if kept.is_empty() {
                return Err(Error::Validation("relative error undefined: every column has zero norm".into()));
            }
            Ok(kept.iter().sum::<f64>() / kept.len() as f64)
        }
        ErrorMetric::Global => {
            let den = truth.frobenius_norm();
            if den == 0.0 {
                return Err(Error::Validation("relative error undefined: zero truth matrix".into()));
            }
            Ok(100.0 * truth.sub(pred)?.frobenius_norm() / den)
        }
    }
}

/// `σ_i / σ_1`, descending. Empty if the matrix is zero.
pub fn spectrum(y: &Matrix) -> Result<Vec<f64>> {
    let s = singular_values(y)?;
    Ok(normalized(&s))
}

fn normalized(s: &[f64]) -> Vec<f64> {
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().map(|v| v / top).collect(),
        _ => vec![0.0; s.len()],
    }
}

/// Number of singular values above `tau * σ_1`.
pub fn numerical_rank(y: &Matrix, tau: f64) -> Result<usize> {
    Ok(rank_of_spectrum(&spectrum(y)?, tau))
}

/// `σ_{k+1} / σ_1` of `y`; zero when `y` has at most `k` singular values or
/// is zero.
pub fn singular_ratio(y: &Matrix, k: usize) -> Result<f64> {
    let s = spectrum(y)?;
    Ok(s.get(k).copied().unwrap_or(0.0))
}

pub fn rank_of_spectrum(normalized: &[f64], tau: f64) -> usize {
    normalized.iter().filter(|&&v| v > tau).count()
}

/// Mean Shannon entropy of the rows of `p` (N×C), natural log, `0 ln 0 = 0`.
pub fn entropy(p: &Matrix) -> Result<f64> {
    let (n, c) = p.shape();
    if n == 0 || c == 0 {
        return Err(Error::Validation("empty probability matrix".into()));
    }
    let mut total = 0.0;
    for i in 0..n {
        let row = p.row(i);
        if let Some(bad) = row.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Validation(format!("row {i} has invalid probability {bad}")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::Validation(format!("row {i} sums to {s}, not 1")));
        }
        total -= row.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>();
    }
    Ok(total / n as f64)
}

/// Convex weights `j / (steps + 1)` on the second sample, `j = 1..=steps`.
pub fn interpolation_weights(steps: usize) -> Vec<f64> {
    (1..=steps).map(|j| j as f64 / (steps + 1) as f64).collect()
}

/// Generated samples between random pairs of training samples.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationSet {
    pub pairs: Vec<(usize, usize)>,
    /// Weight of the second sample for each interpolant.
    pub weights: Vec<f64>,
    /// Coefficients (k × pairs·steps), pair-major.
    pub coeffs: Matrix,
    /// Decoded, denormalized columns (T × pairs·steps).
    pub columns: Matrix,
}

pub fn interpolation_set_for_pairs(
    state: &ModelState,
    fact: &LatentFactorization,
    pairs: &[(usize, usize)],
    steps: usize,
) -> Result<InterpolationSet> {
    if steps == 0 {
        return Err(Error::Parameter("steps must be at least 1".into()));
    }
    let d = fact.a.cols();
    if let Some(&(a, b)) = pairs.iter().find(|&&(a, b)| a >= d || b >= d) {
        return Err(Error::Parameter(format!("pair ({a}, {b}) outside {d} samples")));
    }
    let weights = interpolation_weights(steps);
    let mut cols = Vec::with_capacity(pairs.len() * steps);
    for &(a, b) in pairs {
        let (ca, cb) = (fact.a.column(a), fact.a.column(b));
        for &w in &weights {
            cols.push(ca.iter().zip(&cb).map(|(x, y)| (1.0 - w) * x + w * y).collect::<Vec<f64>>());
        }
    }
    let coeffs = if cols.is_empty() { Matrix::zeros(fact.rank(), 0) } else { Matrix::from_columns(&cols)? };
    let columns = decode_coeffs(state, &fact.u, &coeffs)?;
    Ok(InterpolationSet { pairs: pairs.to_vec(), weights, coeffs, columns })
}

/// `pair_count` random distinct pairs drawn with `seed`.
pub fn interpolation_set(
    state: &ModelState,
    fact: &LatentFactorization,
    pair_count: usize,
    steps: usize,
    seed: u64,
) -> Result<InterpolationSet> {
    let d = fact.a.cols();
    if d < 2 && pair_count > 0 {
        return Err(Error::Parameter("need at least two samples to form pairs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(usize, usize)> = (0..pair_count)
        .map(|_| {
            let a = rng.gen_range(0..d);
            let b = (a + rng.gen_range(1..d)) % d;
            (a, b)
        })
        .collect();
    interpolation_set_for_pairs(state, fact, &pairs, steps)
}

/// Errors and latent statistics of a trained model on a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: ErrorMetric,
    /// Autoencoder reconstruction of the training columns (full-dataset truncation for strong).
    pub train_errors: Vec<Option<f64>>,
    /// Test columns decoded from interpolated coefficients.
    pub test_errors: Vec<Option<f64>>,
    pub train_error: f64,
    pub test_error: Option<f64>,
    /// Normalized singular values of the decoder-input latent of the training set.
    pub spectrum: Vec<f64>,
    pub rank: usize,
    pub factorization_residual: f64,
    pub ms_per_100_batches: Option<f64>,
}

/// Train predictions decode the finalized coefficients; test predictions
/// decode coefficients interpolated at the test parameters.
pub fn evaluate(state: &ModelState, fact: &LatentFactorization, ds: &Dataset, metric: ErrorMetric) -> Result<EvalReport> {
    let train_pred = decode_coeffs(state, &fact.u, &fact.a)?;
    let train_errors = column_errors(&ds.train, &train_pred)?;
    let train_error = relative_error(&ds.train, &train_pred, metric)?;

    let (test_errors, test_error) = if ds.test.cols() > 0 {
        let map = CoefficientMap::from_params(&ds.params, fact.a.clone())?;
        let alpha = interpolate_coeffs(&map, &ds.params.test)?;
        let pred = decode_coeffs(state, &fact.u, &alpha)?;
        (column_errors(&ds.test, &pred)?, Some(relative_error(&ds.test, &pred, metric)?))
    } else {
        (Vec::new(), None)
    };

    let latent = fact.u.matmul(&fact.a)?;
    let spectrum = spectrum(&latent)?;
    let rank = rank_of_spectrum(&spectrum, RANK_TOLERANCE);
    Ok(EvalReport {
        metric,
        train_errors,
        test_errors,
        train_error,
        test_error,
        spectrum,
        rank,
        factorization_residual: fact.residual,
        ms_per_100_batches: None,
    })
}

fn opt_cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:?}"))
}

impl EvalReport {
    /// One row per sample: `split,index,error_pct`, then summary rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut rows: Vec<Vec<String>> = Vec::new();
        for (split, errs) in [("train", &self.train_errors), ("test", &self.test_errors)] {
            for (i, e) in errs.iter().enumerate() {
                rows.push(vec![split.into(), i.to_string(), opt_cell(*e)]);
            }
        }
        rows.push(vec!["mean_train".into(), String::new(), format!("{:?}", self.train_error)]);
        rows.push(vec!["mean_test".into(), String::new(), opt_cell(self.test_error)]);
        rows.push(vec!["rank".into(), String::new(), self.rank.to_string()]);
        rows.push(vec!["factorization_residual".into(), String::new(), format!("{:?}", self.factorization_residual)]);
        write_records_csv(path, &["split", "index", "error_pct"], &rows)
    }
}

pub fn write_spectrum_csv(path: &Path, normalized: &[f64]) -> Result<()> {
    let rows: Vec<Vec<String>> =
        normalized.iter().enumerate().map(|(i, v)| vec![(i + 1).to_string(), format!("{v:?}")]).collect();
    write_records_csv(path, &["index", "sigma_over_sigma1"], &rows)
}

/// Min-max scaling of each coefficient row to `[0, 1]` (plotting only).
pub fn minmax_rows(a: &Matrix) -> Matrix {
    let mut out = a.clone();
    for i in 0..a.rows() {
        let row = a.row(i);
        let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        for j in 0..a.cols() {
            out[(i, j)] = if span > 0.0 { (a[(i, j)] - lo) / span } else { 0.0 };
        }
    }
    out
}

/// Polyline plot of one or more normalized spectra, linear and log panels side by side.
pub fn spectrum_svg(series: &[(&str, &[f64])]) -> String {
    const W: f64 = 360.0;
    const H: f64 = 240.0;
    const PAD: f64 = 36.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
    const LOG_FLOOR: f64 = 1e-16;

    let n = series.iter().map(|(_, s)| s.len()).max().unwrap_or(0).max(2);
    let x_of = |i: usize, panel: f64| panel + PAD + (W - 2.0 * PAD) * i as f64 / (n - 1) as f64;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" font-size=\"11\">\n",
        2.0 * W,
        H
    );
    for (panel, title, log) in [(0.0, "sigma_i / sigma_1", false), (W, "log10(sigma_i / sigma_1)", true)] {
        svg += &format!(
            "<rect x=\"{:.1}\" y=\"{PAD:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"#444\"/>\n",
            panel + PAD,
            W - 2.0 * PAD,
            H - 2.0 * PAD
        );
        svg += &format!("<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{title}</text>\n", panel + W / 2.0, PAD - 10.0);
        let y_of = |v: f64| {
            let f = if log { (v.max(LOG_FLOOR).log10() - LOG_FLOOR.log10()) / -LOG_FLOOR.log10() } else { v.clamp(0.0, 1.0) };
            H - PAD - (H - 2.0 * PAD) * f
        };
        for (s, (name, vals)) in series.iter().enumerate() {
            let pts: Vec<String> =
                vals.iter().enumerate().map(|(i, &v)| format!("{:.2},{:.2}", x_of(i, panel), y_of(v))).collect();
            let color = COLORS[s % COLORS.len()];
            svg += &format!("<polyline fill=\"none\" stroke=\"{color}\" points=\"{}\"/>\n", pts.join(" "));
            if !log {
                svg += &format!(
                    "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"{color}\" text-anchor=\"end\">{name}</text>\n",
                    panel + W - PAD - 4.0,
                    PAD + 14.0 * (s + 1) as f64
                );
            }
        }
    }
    svg += "</svg>\n";
    svg
}

pub fn write_spectrum_svg(path: &Path, series: &[(&str, &[f64])]) -> Result<()> {
    write_atomic(path, spectrum_svg(series).as_bytes())
}
