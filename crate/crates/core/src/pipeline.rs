//! Train-then-evaluate in one call.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::{evaluate, ErrorMetric, EvalReport};
use crate::models::{LatentFactorization, ModelSpec, ModelState, Variant};
use crate::train::{default_k_max, default_kappa, finalize_basis, train_observed, NoObserver, StageEnd, StageHook, TrainObserver, TrainConfig, TrainLog, TrainStatus, DEFAULT_LATENT_DIM};

/// Model spec with the family defaults: `L = 512` (or the parameter count
/// for diabolo) and the family's `k_max`.
pub fn default_spec(ds: &Dataset, variant: Variant) -> ModelSpec {
    let latent = if variant == Variant::Diabolo { ds.params.dims() } else { DEFAULT_LATENT_DIM };
    let mut spec = ModelSpec::new(variant, ds.time_points(), latent);
    if variant.is_rrae() {
        spec.k_max = Some(default_k_max(ds.family));
    }
    spec
}

pub fn default_train_config(ds: &Dataset, seed: u64) -> TrainConfig {
    TrainConfig { kappa_w: default_kappa(ds.family), seed, ..TrainConfig::default() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fitted {
    pub state: ModelState,
    pub log: TrainLog,
    /// Absent when training diverged.
    pub factorization: Option<LatentFactorization>,
    pub report: Option<EvalReport>,
}

/// Outcome of one restart in [`fit_best_of`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub seed: u64,
    pub status: TrainStatus,
    /// Reconstruction loss on the whole training set; `None` if diverged.
    pub train_recon: Option<f64>,
    pub test_error: Option<f64>,
}

/// Trains once per seed (initialization and shuffling both use it) and keeps
/// the run with the lowest final training reconstruction loss. Test data
/// plays no part in the choice.
pub fn fit_best_of(ds: &Dataset, spec: &ModelSpec, cfg: &TrainConfig, seeds: &[u64]) -> Result<(Fitted, Vec<RestartSummary>)> {
    fit_best_of_observed(ds, spec, cfg, seeds, &mut NoObserver)
}

/// [`fit_best_of`] with `observer` attached to every restart.
pub fn fit_best_of_observed(
    ds: &Dataset,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    seeds: &[u64],
    observer: &mut dyn TrainObserver,
) -> Result<(Fitted, Vec<RestartSummary>)> {
    if seeds.is_empty() {
        return Err(Error::Config("at least one restart seed is required".into()));
    }
    let mut best: Option<(f64, Fitted)> = None;
    let mut summaries = Vec::with_capacity(seeds.len());
    let mut last = None;
    for &seed in seeds {
        let run_cfg = TrainConfig { seed, ..*cfg };
        let fitted = fit_observed(ds, spec.clone(), &run_cfg, seed, observer)?;
        let recon = fitted.log.final_losses.as_ref().map(|f| f.recon);
        log::info!("restart seed {seed}: {:?}, train recon {recon:?}", fitted.log.status);
        summaries.push(RestartSummary {
            seed,
            status: fitted.log.status,
            train_recon: recon,
            test_error: fitted.report.as_ref().and_then(|r| r.test_error),
        });
        match recon {
            Some(r) if r.is_finite() && best.as_ref().is_none_or(|(b, _)| r < *b) => best = Some((r, fitted)),
            _ => last = Some(fitted),
        }
    }
    let chosen = match best {
        Some((_, f)) => f,
        None => last.expect("at least one run"),
    };
    Ok((chosen, summaries))
}

/// Initializes with `init_seed`, trains, finalizes the basis and evaluates.
pub fn fit(
    ds: &Dataset,
    spec: ModelSpec,
    cfg: &TrainConfig,
    init_seed: u64,
    on_stage_end: &mut dyn FnMut(&StageEnd<'_>) -> Result<()>,
) -> Result<Fitted> {
    fit_observed(ds, spec, cfg, init_seed, &mut StageHook(on_stage_end))
}

/// [`fit`] with per-step hooks.
pub fn fit_observed(
    ds: &Dataset,
    spec: ModelSpec,
    cfg: &TrainConfig,
    init_seed: u64,
    observer: &mut dyn TrainObserver,
) -> Result<Fitted> {
    spec.validate_for(ds.params.dims())?;
    let x = ds.train_normalized()?;
    let state = ModelState::init_with_data(spec, &x, ds.norm.clone(), init_seed)?;
    let out = train_observed(state, &x, cfg, observer)?;
    if matches!(out.log.status, TrainStatus::Diverged { .. }) {
        return Ok(Fitted { state: out.state, log: out.log, factorization: None, report: None });
    }
    let fact = finalize_basis(&out.state, &x)?;
    let mut report = evaluate(&out.state, &fact, ds, ErrorMetric::PerColumn)?;
    report.ms_per_100_batches = out.log.ms_per_100_batches();
    Ok(Fitted { state: out.state, log: out.log, factorization: Some(fact), report: Some(report) })
}
