use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const EPS_STD: f64 = 1e-8;

/// Per-row (per time sample) mean and standard deviation across columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub eps_std: f64,
}

impl Normalization {
    pub fn fit(x: &Matrix) -> Result<Self> {
        let (t, d) = x.shape();
        if d < 2 {
            return Err(Error::Parameter(format!("normalization needs at least 2 columns, got {d}")));
        }
        let mut mean = Vec::with_capacity(t);
        let mut std = Vec::with_capacity(t);
        for i in 0..t {
            let row = x.row(i);
            let mu = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
            mean.push(mu);
            std.push(var.sqrt().max(EPS_STD));
        }
        Ok(Normalization { mean, std, eps_std: EPS_STD })
    }

    pub fn identity(rows: usize) -> Self {
        Normalization { mean: vec![0.0; rows], std: vec![1.0; rows], eps_std: EPS_STD }
    }

    pub fn rows(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, x: &Matrix, op: &'static str) -> Result<()> {
        if x.rows() != self.rows() {
            return Err(Error::dim(op, x.shape(), (self.rows(), 1)));
        }
        Ok(())
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x, "normalize")?;
        Ok(Matrix::from_fn(x.rows(), x.cols(), |i, j| (x[(i, j)] - self.mean[i]) / self.std[i]))
    }

    pub fn invert(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x, "denormalize")?;
        Ok(Matrix::from_fn(x.rows(), x.cols(), |i, j| x[(i, j)] * self.std[i] + self.mean[i]))
    }
}

pub fn normalize(x: &Matrix) -> Result<(Matrix, Normalization)> {
    let stats = Normalization::fit(x)?;
    let xn = stats.apply(x)?;
    Ok((xn, stats))
}

pub fn denormalize(x: &Matrix, stats: &Normalization) -> Result<Matrix> {
    stats.invert(x)
}
