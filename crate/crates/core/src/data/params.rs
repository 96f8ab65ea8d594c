use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::families::Family;
use crate::error::{Error, Result};

/// Training grid and random test points of a parametric family.
///
/// 2-D training grids are stored with the first parameter varying slowest:
/// column `i * n2 + j` holds `(grid1[i], grid2[j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub bounds: Vec<(f64, f64)>,
    pub grid_counts: Vec<usize>,
    pub train: Vec<Vec<f64>>,
    pub test: Vec<Vec<f64>>,
    /// One test-sampling seed per parameter dimension.
    pub seeds: Vec<u64>,
}

impl ParamSet {
    pub fn dims(&self) -> usize {
        self.bounds.len()
    }

    /// Equidistant values of training dimension `d`.
    pub fn grid_axis(&self, d: usize) -> Vec<f64> {
        let (lo, hi) = self.bounds[d];
        linspace(lo, hi, self.grid_counts[d])
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dims() && p.iter().zip(&self.bounds).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }
}

/// Default training counts per dimension.
pub fn default_train_counts(family: Family) -> Vec<usize> {
    match family {
        Family::Shift => vec![17],
        Family::Stair => vec![40],
        Family::Freqs | Family::Gauss => vec![8, 8],
        Family::External => vec![],
    }
}

pub fn default_test_count(family: Family) -> usize {
    match family {
        Family::Shift => 80,
        Family::Stair => 300,
        Family::Freqs | Family::Gauss => 100,
        Family::External => 0,
    }
}

/// Per-dimension test seeds used by the reference experiments.
pub fn default_seeds(family: Family) -> Vec<u64> {
    match family {
        Family::Shift | Family::Stair => vec![0],
        Family::Freqs => vec![140, 8],
        Family::Gauss => vec![1000, 50],
        Family::External => vec![],
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n).map(|i| if i + 1 == n { hi } else { lo + step * i as f64 }).collect()
        }
    }
}

/// Equidistant training grid over the family's box plus `test_count`
/// uniform test points, dimension `d` drawn from `ChaCha8Rng(seeds[d])`.
pub fn sample_params(family: Family, train_counts: &[usize], test_count: usize, seeds: &[u64]) -> Result<ParamSet> {
    let bounds = family.param_box();
    let dims = bounds.len();
    if dims == 0 {
        return Err(Error::Config(format!("{family} has no parameter box")));
    }
    if train_counts.len() != dims || seeds.len() != dims {
        return Err(Error::Config(format!(
            "{family} needs {dims} train counts and seeds, got {} and {}",
            train_counts.len(),
            seeds.len()
        )));
    }
    if train_counts.iter().any(|&c| c < 2) || test_count == 0 {
        return Err(Error::Config("need at least 2 training values per dimension and 1 test value".into()));
    }

    let axes: Vec<Vec<f64>> = bounds.iter().zip(train_counts).map(|(&(lo, hi), &n)| linspace(lo, hi, n)).collect();
    let mut train = vec![vec![]];
    for axis in &axes {
        train = train
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect();
    }

    let columns: Vec<Vec<f64>> = bounds
        .iter()
        .zip(seeds)
        .map(|(&(lo, hi), &seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..test_count).map(|_| rng.gen_range(lo..=hi)).collect()
        })
        .collect();
    let test = (0..test_count).map(|i| columns.iter().map(|c| c[i]).collect()).collect();

    Ok(ParamSet { bounds, grid_counts: train_counts.to_vec(), train, test, seeds: seeds.to_vec() })
}
