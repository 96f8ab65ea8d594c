//! Experiment configuration: one TOML document, unknown keys rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use rrae::data::{DataConfig, Dataset, Family, StairParams, TimeGrid};
use rrae::eval::{ErrorMetric, RANK_TOLERANCE};
use rrae::models::{ModelSpec, Variant, WeakInit};
use rrae::nn::{Activation, AdaBeliefConfig, LrSchedule};
use rrae::pipeline::default_spec;
use rrae::train::{default_kappa, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: Family,
    /// Run directory; `--out` takes precedence.
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Training seed; `--seed` takes precedence.
    #[serde(default)]
    pub seed: u64,
    /// Number of restarts, seeds `seed..seed + restarts`; the run with the
    /// lowest training reconstruction loss is kept.
    #[serde(default = "one")]
    pub restarts: u64,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub external: Option<ExternalSource>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub grid: Option<TimeGrid>,
    pub train_counts: Option<Vec<usize>>,
    pub test_count: Option<usize>,
    /// Per-dimension seeds of the test parameters.
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub stair: StairParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExternalFormat {
    /// Numeric CSV with one header row; columns are samples.
    Csv,
    /// IDX image file; each image becomes one column.
    Idx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalSource {
    pub path: PathBuf,
    pub format: ExternalFormat,
    #[serde(default)]
    pub limit: Option<usize>,
    /// Every `test_every`-th column is held out for testing.
    #[serde(default)]
    pub test_every: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub variant: Option<Variant>,
    pub latent_dim: Option<usize>,
    pub k_max: Option<usize>,
    pub inner_layers: Option<usize>,
    pub nuclear_weight: Option<f64>,
    pub inner_bias: Option<bool>,
    pub weak_init: Option<WeakInit>,
    pub width: Option<usize>,
    pub encoder_depth: Option<usize>,
    pub decoder_depth: Option<usize>,
    pub activation: Option<Activation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub batch_size: usize,
    pub schedule: LrSchedule,
    /// Family default when unset.
    pub kappa_w: Option<f64>,
    pub shuffle: bool,
    pub optimizer: AdaBeliefConfig,
    pub max_batches: Option<u64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            batch_size: t.batch_size,
            schedule: t.schedule,
            kappa_w: None,
            shuffle: t.shuffle,
            optimizer: t.optimizer,
            max_batches: t.max_batches,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub metric: ErrorMetric,
    pub rank_tolerance: f64,
    pub pairs: usize,
    pub steps: usize,
    pub interp_seed: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { metric: ErrorMetric::PerColumn, rank_tolerance: RANK_TOLERANCE, pairs: 3, steps: 5, interp_seed: 0 }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            bail!("restarts must be at least 1");
        }
        if (self.family == Family::External) != self.external.is_some() {
            bail!("an [external] source is required for, and only for, family = \"external\"");
        }
        if !(self.eval.rank_tolerance > 0.0 && self.eval.rank_tolerance < 1.0) {
            bail!("eval.rank_tolerance must lie in (0, 1)");
        }
        self.train_config(self.seed).validate()?;
        if let Some(grid) = &self.data.grid {
            grid.validate()?;
        }
        Ok(())
    }

    pub fn data_config(&self) -> DataConfig {
        DataConfig {
            family: self.family,
            grid: self.data.grid,
            train_counts: self.data.train_counts.clone(),
            test_count: self.data.test_count,
            seeds: self.data.seeds.clone(),
            stair: self.data.stair,
        }
    }

    /// Generates the synthetic dataset or loads the external one.
    pub fn build_dataset(&self) -> Result<Dataset> {
        match &self.external {
            None => Ok(Dataset::generate(&self.data_config())?),
            Some(src) => {
                let x = match src.format {
                    ExternalFormat::Csv => rrae::io::read_matrix_csv(&src.path)?.1,
                    ExternalFormat::Idx => rrae::data::idx::load_idx_images(&src.path, src.limit)?,
                };
                let x = match (src.format, src.limit) {
                    (ExternalFormat::Csv, Some(n)) if n < x.cols() => x.select_columns(&(0..n).collect::<Vec<_>>())?,
                    _ => x,
                };
                Ok(Dataset::external(x, src.test_every)?)
            }
        }
    }

    pub fn variant(&self) -> Result<Variant> {
        self.model.variant.context("model.variant is required for training")
    }

    pub fn model_spec(&self, ds: &Dataset) -> Result<ModelSpec> {
        let m = &self.model;
        let variant = self.variant()?;
        let mut spec = default_spec(ds, variant);
        if let Some(l) = m.latent_dim {
            spec.latent_dim = l;
        }
        spec.encoder.output_dim = spec.latent_dim;
        spec.decoder.input_dim = spec.latent_dim;
        if m.k_max.is_some() {
            spec.k_max = m.k_max;
        }
        if m.inner_layers.is_some() {
            spec.inner_layers = m.inner_layers;
        }
        if m.nuclear_weight.is_some() {
            spec.nuclear_weight = m.nuclear_weight;
        }
        if let Some(b) = m.inner_bias {
            spec.inner_bias = b;
        }
        if let Some(w) = m.weak_init {
            spec.weak_init = w;
        }
        for net in [&mut spec.encoder, &mut spec.decoder] {
            if let Some(w) = m.width {
                net.width = w;
            }
            if let Some(a) = m.activation {
                net.activation = a;
            }
        }
        if let Some(d) = m.encoder_depth {
            spec.encoder.depth = d;
        }
        if let Some(d) = m.decoder_depth {
            spec.decoder.depth = d;
        }
        spec.validate_for(ds.params.dims())?;
        Ok(spec)
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            batch_size: t.batch_size,
            schedule: t.schedule,
            kappa_w: t.kappa_w.unwrap_or_else(|| default_kappa(self.family)),
            seed,
            shuffle: t.shuffle,
            optimizer: t.optimizer,
            max_batches: t.max_batches,
        }
    }

    pub fn restart_seeds(&self, seed: u64) -> Vec<u64> {
        (seed..seed + self.restarts).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = ExperimentConfig::parse("family = \"gauss\"\n[model]\nvariant = \"rrae_weak\"\n").unwrap();
        assert_eq!(c.restarts, 1);
        assert_eq!(c.train_config(4).kappa_w, 0.13);
        assert_eq!(c.train_config(4).seed, 4);
        let ds = c.build_dataset().unwrap();
        let spec = c.model_spec(&ds).unwrap();
        assert_eq!((spec.latent_dim, spec.k_max), (512, Some(2)));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::parse("family = \"shift\"\nlatent = 3\n").is_err());
        assert!(ExperimentConfig::parse("family = \"shift\"\n[model]\nlatnt_dim = 3\n").is_err());
        assert!(ExperimentConfig::parse("family = \"shift\"\n[train.schedule]\nrate = 3\n").is_err());
    }

    #[test]
    fn invalid_family_rejected() {
        assert!(ExperimentConfig::parse("family = \"spiral\"\n").is_err());
    }

    #[test]
    fn overrides_apply() {
        let text = "family = \"shift\"\n[model]\nvariant = \"irmae\"\nlatent_dim = 16\ninner_layers = 4\nwidth = 8\n";
        let c = ExperimentConfig::parse(text).unwrap();
        let spec = c.model_spec(&c.build_dataset().unwrap()).unwrap();
        assert_eq!((spec.latent_dim, spec.inner_layers, spec.encoder.width), (16, Some(4), 8));
        assert_eq!((spec.encoder.output_dim, spec.decoder.input_dim), (16, 16));
    }

    #[test]
    fn external_needs_source() {
        assert!(ExperimentConfig::parse("family = \"external\"\n").is_err());
    }
}
