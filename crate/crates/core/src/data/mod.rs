//! Parametric snapshot datasets: generators, parameter sampling,
//! normalization and on-disk storage.

mod families;
pub mod idx;
mod normalize;
mod params;
mod store;

pub use families::{
    gen_freqs, gen_gauss, gen_shift, gen_stair, generate_column, Family, StairParams, TimeGrid, STAIR_DEFAULT_END,
};
pub use normalize::{denormalize, normalize, Normalization, EPS_STD};
pub use params::{default_seeds, default_test_count, default_train_counts, linspace, sample_params, ParamSet};
pub use store::{read_dataset, write_dataset, DATASET_FORMAT};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// What to generate. Unset fields take the family defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub family: Family,
    #[serde(default)]
    pub grid: Option<TimeGrid>,
    #[serde(default)]
    pub train_counts: Option<Vec<usize>>,
    #[serde(default)]
    pub test_count: Option<usize>,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub stair: StairParams,
}

impl DataConfig {
    pub fn new(family: Family) -> Self {
        DataConfig { family, grid: None, train_counts: None, test_count: None, seeds: None, stair: StairParams::default() }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid.unwrap_or_else(|| TimeGrid::default_for(self.family))
    }
}

/// Snapshot matrices `T × D` (columns are samples) with their parameters and
/// the normalization fitted on the training columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub family: Family,
    pub grid: TimeGrid,
    pub stair: StairParams,
    pub params: ParamSet,
    pub train: Matrix,
    pub test: Matrix,
    pub norm: Normalization,
}

impl Dataset {
    pub fn generate(cfg: &DataConfig) -> Result<Dataset> {
        let family = cfg.family;
        if family == Family::External {
            return Err(Error::Config("external datasets are loaded, not generated".into()));
        }
        let grid = cfg.grid();
        grid.validate()?;
        let counts = cfg.train_counts.clone().unwrap_or_else(|| default_train_counts(family));
        let test_count = cfg.test_count.unwrap_or_else(|| default_test_count(family));
        let seeds = cfg.seeds.clone().unwrap_or_else(|| default_seeds(family));
        let params = sample_params(family, &counts, test_count, &seeds)?;

        let t = grid.values();
        let build = |ps: &[Vec<f64>]| -> Result<Matrix> {
            let cols = ps.iter().map(|p| generate_column(family, &t, p, &cfg.stair)).collect::<Result<Vec<_>>>()?;
            Matrix::from_columns(&cols)
        };
        let train = build(&params.train)?;
        let test = build(&params.test)?;
        let norm = Normalization::fit(&train)?;
        Ok(Dataset { family, grid, stair: cfg.stair, params, train, test, norm })
    }

    /// Wraps externally loaded columns; `test_every`-th columns (if any) are
    /// held out as the test split. Parameters are the column indices.
    pub fn external(x: Matrix, test_every: Option<usize>) -> Result<Dataset> {
        let d = x.cols();
        let is_test = |j: usize| test_every.is_some_and(|k| k > 0 && j % k == k - 1);
        let train_idx: Vec<usize> = (0..d).filter(|&j| !is_test(j)).collect();
        let test_idx: Vec<usize> = (0..d).filter(|&j| is_test(j)).collect();
        let train = x.select_columns(&train_idx)?;
        let test = x.select_columns(&test_idx)?;
        let norm = Normalization::fit(&train)?;
        let params = ParamSet {
            bounds: vec![(0.0, (d.max(1) - 1) as f64)],
            grid_counts: vec![train_idx.len()],
            train: train_idx.iter().map(|&j| vec![j as f64]).collect(),
            test: test_idx.iter().map(|&j| vec![j as f64]).collect(),
            seeds: vec![],
        };
        let grid = TimeGrid { start: 0.0, end: (x.rows().max(2) - 1) as f64, points: x.rows() };
        Ok(Dataset { family: Family::External, grid, stair: StairParams::default(), params, train, test, norm })
    }

    pub fn time_points(&self) -> usize {
        self.train.rows()
    }

    pub fn train_normalized(&self) -> Result<Matrix> {
        self.norm.apply(&self.train)
    }

    pub fn test_normalized(&self) -> Result<Matrix> {
        self.norm.apply(&self.test)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_bit_identical() {
        for f in Family::SYNTHETIC {
            let a = Dataset::generate(&DataConfig::new(f)).unwrap();
            let b = Dataset::generate(&DataConfig::new(f)).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.train.cols(), a.params.train.len());
            assert_eq!(a.test.cols(), a.params.test.len());
            assert!(a.norm.std.iter().all(|s| *s >= EPS_STD));
        }
    }

    #[test]
    fn columns_match_their_parameters() {
        let ds = Dataset::generate(&DataConfig::new(Family::Gauss)).unwrap();
        let t = ds.grid.values();
        let j = 13;
        let p = &ds.params.train[j];
        assert_eq!(ds.train.column(j), gen_gauss(&t, p[0], p[1]));
    }

    #[test]
    fn external_split() {
        let x = Matrix::from_fn(4, 10, |i, j| (i * 10 + j) as f64);
        let ds = Dataset::external(x, Some(5)).unwrap();
        assert_eq!(ds.train.cols(), 8);
        assert_eq!(ds.test.cols(), 2);
        assert_eq!(ds.params.test, vec![vec![4.0], vec![9.0]]);
    }
}
