//! Mini-batch training with AdaBelief and the staged learning-rate schedule.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::data::Family;
use crate::error::{Error, Result};
use crate::linalg::{svd, Matrix};
use crate::models::{unit_columns, FactorSource, LatentFactorization, ModelState, Variant};
use crate::nn::{AdaBelief, AdaBeliefConfig, LrSchedule, Scheduler};

pub const DEFAULT_LATENT_DIM: usize = 512;
pub const TIMING_WARMUP: usize = 10;

/// Latent rank used for each synthetic family.
pub fn default_k_max(family: Family) -> usize {
    match family {
        Family::Shift | Family::Stair => 1,
        Family::Freqs => 12,
        Family::Gauss | Family::External => 2,
    }
}

/// Learning-rate multiplier for the weak coefficients `A`.
pub fn default_kappa(family: Family) -> f64 {
    match family {
        Family::Freqs => 0.66,
        Family::Gauss => 0.13,
        _ => 1.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub schedule: LrSchedule,
    /// Multiplies the rate of the weak coefficients `A` only.
    pub kappa_w: f64,
    pub seed: u64,
    pub shuffle: bool,
    pub optimizer: AdaBeliefConfig,
    /// Hard cap on the number of batches, on top of the schedule.
    pub max_batches: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 20,
            schedule: LrSchedule::default(),
            kappa_w: 1.0,
            seed: 0,
            shuffle: true,
            optimizer: AdaBeliefConfig::default(),
            max_batches: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.kappa_w > 0.0 && self.kappa_w.is_finite()) {
            return Err(Error::Config(format!("kappa_w must be positive, got {}", self.kappa_w)));
        }
        self.schedule.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub batch: u64,
    pub stage: usize,
    pub lr: f64,
    pub loss: f64,
}

/// Loss terms evaluated on the whole training set after training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalLosses {
    /// `||X - X̃||_F / D`
    pub recon: f64,
    /// Penalty term divided by `D`, if the variant has one.
    pub penalty: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainStatus {
    Finished,
    /// Stopped by `max_batches` before the schedule ran out.
    Capped,
    /// Non-finite loss or gradient at `batch`; the state is the last good one.
    Diverged { batch: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<BatchRecord>,
    /// Wall time of each batch in milliseconds.
    pub wall_ms: Vec<f64>,
    pub stage_ends: Vec<u64>,
    pub status: TrainStatus,
    pub final_losses: Option<FinalLosses>,
}

impl TrainLog {
    /// Mean wall time per 100 batches, skipping the warmup batches.
    pub fn ms_per_100_batches(&self) -> Option<f64> {
        let timed = self.wall_ms.get(TIMING_WARMUP..).filter(|s| !s.is_empty())?;
        Some(100.0 * timed.iter().sum::<f64>() / timed.len() as f64)
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }
}

pub struct TrainOutcome {
    pub state: ModelState,
    pub log: TrainLog,
}

/// Passed to the stage-end hook.
pub struct StageEnd<'a> {
    pub stage: usize,
    pub batch: u64,
    pub state: &'a ModelState,
}

/// Hooks called during [`train_observed`].
pub trait TrainObserver {
    /// After every optimizer step, with the columns of that batch.
    fn on_step(&mut self, _batch: u64, _columns: &[usize], _state: &ModelState) -> Result<()> {
        Ok(())
    }

    fn on_stage_end(&mut self, _end: &StageEnd<'_>) -> Result<()> {
        Ok(())
    }
}

/// Observer that does nothing.
pub struct NoObserver;

impl TrainObserver for NoObserver {}

/// Adapts a stage-end closure to [`TrainObserver`].
pub struct StageHook<'f>(pub &'f mut dyn FnMut(&StageEnd<'_>) -> Result<()>);

impl TrainObserver for StageHook<'_> {
    fn on_stage_end(&mut self, end: &StageEnd<'_>) -> Result<()> {
        (self.0)(end)
    }
}

/// Shuffled column batches for one epoch. The last batch may be short.
pub fn epoch_batches(d: usize, batch_size: usize, rng: Option<&mut ChaCha8Rng>) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..d).collect();
    if let Some(rng) = rng {
        idx.shuffle(rng);
    }
    idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Columns of the weak coefficients `A` that a batch reads.
pub fn batch_columns_weak(batch: &[usize]) -> &[usize] {
    batch
}

/// One forward/backward pass; returns the loss and the gradient of every parameter block.
pub fn batch_gradients(state: &ModelState, x: &Matrix, batch: &[usize]) -> Result<(f64, Vec<Matrix>)> {
    let mut tape = Tape::new();
    let bound = state.bind(&mut tape);
    let xb = tape.leaf(x.select_columns(batch)?);
    let (terms, _) = state.loss(&mut tape, &bound, xb, batch)?;
    let loss = tape.scalar(terms.total);
    if !loss.is_finite() {
        return Ok((loss, Vec::new()));
    }
    let mut grads = tape.backward(terms.total);
    Ok((loss, bound.nodes().into_iter().map(|n| grads.take(n)).collect()))
}

/// Trains `state` on normalized columns `x` (T×D).
pub fn train(
    state: ModelState,
    x: &Matrix,
    cfg: &TrainConfig,
    on_stage_end: &mut dyn FnMut(&StageEnd<'_>) -> Result<()>,
) -> Result<TrainOutcome> {
    train_observed(state, x, cfg, &mut StageHook(on_stage_end))
}

/// [`train`] with per-step hooks.
pub fn train_observed(
    mut state: ModelState,
    x: &Matrix,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (t, d) = x.shape();
    if t != state.spec.input_dim {
        return Err(Error::dim("train", x.shape(), (state.spec.input_dim, d)));
    }
    if d == 0 {
        return Err(Error::Parameter("no training columns".into()));
    }
    if let Some(a) = &state.coeffs {
        if a.cols() != d {
            return Err(Error::Config(format!("weak coefficients have {} columns, dataset has {d}", a.cols())));
        }
    }
    if state.variant() == Variant::RraeStrong {
        let k = state.spec.k_max.expect("validated");
        if k > d.min(cfg.batch_size) {
            return Err(Error::Config(format!("k_max = {k} exceeds batch size {} or dataset size {d}", cfg.batch_size)));
        }
    }

    let names = state.param_names();
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let shapes: Vec<_> = state.params().iter().map(|m| m.shape()).collect();
    let a_block = state.coeffs.is_some().then(|| names.len() - 1);
    let mut opt = AdaBelief::new(cfg.optimizer, &shapes);
    let mut sched = Scheduler::new(cfg.schedule)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let min_batch = if state.variant() == Variant::RraeStrong { state.spec.k_max.unwrap_or(1) } else { 1 };

    let mut log = TrainLog { records: Vec::new(), wall_ms: Vec::new(), stage_ends: Vec::new(), status: TrainStatus::Finished, final_losses: None };
    let mut batch_no = 0u64;

    'epochs: loop {
        let batches = epoch_batches(d, cfg.batch_size, cfg.shuffle.then_some(&mut rng));
        for batch in batches {
            if batch.len() < min_batch {
                log::debug!("skipping a {}-column tail batch (k_max = {min_batch})", batch.len());
                continue;
            }
            if cfg.max_batches.is_some_and(|m| batch_no >= m) {
                log.status = TrainStatus::Capped;
                break 'epochs;
            }
            let started = Instant::now();
            let lr = sched.lr();
            let stage = sched.stage();
            let (loss, grads) = match batch_gradients(&state, x, &batch) {
                Ok(v) => v,
                Err(Error::Numerical { what, .. }) => {
                    log::error!("{what} failed at batch {batch_no}");
                    (f64::NAN, Vec::new())
                }
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                log::error!("non-finite loss at batch {batch_no}; keeping the previous parameters");
                log.status = TrainStatus::Diverged { batch: batch_no };
                break 'epochs;
            }
            let mut lrs = vec![lr; grads.len()];
            if let Some(i) = a_block {
                lrs[i] = lr * cfg.kappa_w;
            }
            match opt.step(&mut state.params_mut(), &grads, &lrs, &name_refs) {
                Ok(()) => {}
                Err(Error::Optimizer { block }) => {
                    log::error!("non-finite gradient in `{block}` at batch {batch_no}");
                    log.status = TrainStatus::Diverged { batch: batch_no };
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
            if let Some(u) = state.basis.as_mut() {
                unit_columns(u);
            }
            log.wall_ms.push(started.elapsed().as_secs_f64() * 1e3);
            log.records.push(BatchRecord { batch: batch_no, stage, lr, loss });
            observer.on_step(batch_no, &batch, &state)?;
            batch_no += 1;

            let step = sched.observe(loss);
            if step.stage_ended {
                log::info!(
                    "stage {stage} ended at batch {batch_no} (loss {loss:.4e}{})",
                    if step.stagnated { ", stagnated" } else { "" }
                );
                log.stage_ends.push(batch_no);
                observer.on_stage_end(&StageEnd { stage, batch: batch_no, state: &state })?;
            }
            if step.finished {
                break 'epochs;
            }
        }
    }

    if !matches!(log.status, TrainStatus::Diverged { .. }) {
        log.final_losses = Some(final_losses(&state, x)?);
    }
    Ok(TrainOutcome { state, log })
}

/// Loss terms on the whole training set, each divided by `D`.
pub fn final_losses(state: &ModelState, x: &Matrix) -> Result<FinalLosses> {
    let d = x.cols();
    let all: Vec<usize> = (0..d).collect();
    let mut tape = Tape::new();
    let bound = state.bind(&mut tape);
    let xn = tape.leaf(x.clone());
    let (terms, _) = state.loss(&mut tape, &bound, xn, &all)?;
    Ok(FinalLosses {
        recon: tape.scalar(terms.recon) / d as f64,
        penalty: terms.penalty.map(|p| tape.scalar(p) / d as f64),
    })
}

/// Basis and coefficients of the latent space after training.
///
/// Strong: rank-`k_max` SVD of the encoded training set with `A = diag(σ) Vᵀ`.
/// Weak: the trained `U` and `A`. Others: `U = I` and `A = Y`.
pub fn finalize_basis(state: &ModelState, x: &Matrix) -> Result<LatentFactorization> {
    let y = state.encode_matrix(x)?;
    let y_norm = y.frobenius_norm();
    let residual_of = |u: &Matrix, a: &Matrix| -> Result<f64> {
        let r = y.sub(&u.matmul(a)?)?.frobenius_norm();
        Ok(if y_norm > 0.0 { r / y_norm } else { r })
    };
    match state.variant() {
        Variant::RraeStrong => {
            let k = state.spec.k_max.expect("validated");
            let s = svd(&y)?;
            if k > s.sigma.len() {
                return Err(Error::Config(format!("k_max = {k} exceeds latent rank bound {}", s.sigma.len())));
            }
            let idx: Vec<usize> = (0..k).collect();
            let u = s.u.select_columns(&idx)?;
            let a = Matrix::from_fn(k, y.cols(), |i, j| s.sigma[i] * s.vt[(i, j)]);
            let residual = residual_of(&u, &a)?;
            Ok(LatentFactorization { u, a, sigma: Some(s.sigma[..k].to_vec()), source: FactorSource::SvdStrong, residual })
        }
        Variant::RraeWeak => {
            let u = state.basis.clone().expect("weak has U");
            let a = state.coeffs.clone().expect("weak has A");
            let residual = residual_of(&u, &a)?;
            Ok(LatentFactorization { u, a, sigma: None, source: FactorSource::TrainedWeak, residual })
        }
        _ => {
            let u = Matrix::identity(y.rows());
            Ok(LatentFactorization { u, a: y, sigma: None, source: FactorSource::Passthrough, residual: 0.0 })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Normalization;
    use crate::models::ModelSpec;

    fn tiny(variant: Variant, d: usize) -> (ModelState, Matrix) {
        let t = 6;
        let mut spec = ModelSpec::new(variant, t, 5);
        spec.encoder.width = 8;
        spec.decoder.width = 8;
        spec.decoder.depth = 2;
        let x = Matrix::from_fn(t, d, |i, j| ((i as f64 + 1.0) * (j as f64 * 0.3 + 0.2)).sin());
        (ModelState::init(spec, d, Normalization::identity(t), 1).unwrap(), x)
    }

    fn short() -> TrainConfig {
        let mut cfg = TrainConfig { batch_size: 4, ..TrainConfig::default() };
        cfg.schedule.batches_per_stage = 30;
        cfg
    }

    #[test]
    fn epoch_covers_every_column_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = epoch_batches(23, 5, Some(&mut rng));
        assert_eq!(b.len(), 5);
        assert_eq!(b.last().unwrap().len(), 3);
        let mut all: Vec<usize> = b.concat();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
    }

    #[test]
    fn tail_batch_counts_as_a_step() {
        let (s, x) = tiny(Variant::Vanilla, 10);
        let mut cfg = short();
        cfg.max_batches = Some(6);
        let out = train(s, &x, &cfg, &mut |_| Ok(())).unwrap();
        assert_eq!(out.log.records.len(), 6);
        assert_eq!(out.log.status, TrainStatus::Capped);
    }

    #[test]
    fn loss_decreases_and_stages_fire() {
        let (s, x) = tiny(Variant::RraeStrong, 12);
        let mut ends = Vec::new();
        let out = train(s, &x, &short(), &mut |e| {
            ends.push(e.stage);
            Ok(())
        })
        .unwrap();
        assert_eq!(out.log.status, TrainStatus::Finished);
        assert_eq!(ends, vec![0, 1, 2]);
        let first = out.log.records[0].loss;
        assert!(out.log.last_loss().unwrap() < first);
    }

    #[test]
    fn weak_basis_stays_unit() {
        let (s, x) = tiny(Variant::RraeWeak, 12);
        let out = train(s, &x, &short(), &mut |_| Ok(())).unwrap();
        let u = out.state.basis.as_ref().unwrap();
        for j in 0..u.cols() {
            let n: f64 = u.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn divergence_keeps_last_good_state() {
        let (mut s, x) = tiny(Variant::Vanilla, 8);
        s.decoder.layers[0].weight[(0, 0)] = f64::NAN;
        let before = s.clone();
        let out = train(s, &x, &short(), &mut |_| Ok(())).unwrap();
        assert_eq!(out.log.status, TrainStatus::Diverged { batch: 0 });
        assert!(out.log.final_losses.is_none());
        assert_eq!(format!("{:?}", out.state), format!("{before:?}"));
    }

    #[test]
    fn passthrough_factorization() {
        let (s, x) = tiny(Variant::Vanilla, 8);
        let f = finalize_basis(&s, &x).unwrap();
        assert_eq!(f.u, Matrix::identity(5));
        assert_eq!(f.a, s.encode_matrix(&x).unwrap());
        assert_eq!(f.source, FactorSource::Passthrough);
    }

    #[test]
    fn strong_factorization_has_rank_k() {
        let (s, x) = tiny(Variant::RraeStrong, 8);
        let f = finalize_basis(&s, &x).unwrap();
        assert_eq!(f.rank(), 1);
        assert_eq!(f.a.shape(), (1, 8));
        let y = s.encode_matrix(&x).unwrap();
        let sv = crate::linalg::singular_values(&y).unwrap();
        let tail: f64 = sv[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((f.residual - tail / y.frobenius_norm()).abs() < 1e-10);
    }

    #[test]
    fn defaults() {
        assert_eq!(default_k_max(Family::Freqs), 12);
        assert_eq!(default_kappa(Family::Gauss), 0.13);
        assert_eq!(TrainConfig::default().batch_size, 20);
    }
}
