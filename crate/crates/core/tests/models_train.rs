mod common;

use common::*;
use proptest::prelude::*;
use rrae::data::{DataConfig, Dataset, Family, Normalization};
use rrae::linalg::{singular_values, Matrix};
use rrae::models::{ModelSpec, ModelState, Variant, WeakInit};
use rrae::nn::{AdaBelief, AdaBeliefConfig, LrSchedule};
use rrae::pipeline::{default_spec, default_train_config, fit_best_of};
use rrae::train::{batch_gradients, finalize_basis, train_observed, TrainConfig, TrainObserver, TrainStatus};
use rrae::Result;

fn small(variant: Variant, t: usize, l: usize) -> ModelSpec {
    let mut s = ModelSpec::new(variant, t, l);
    s.encoder.width = 8;
    s.decoder.width = 8;
    s.decoder.depth = 2;
    s
}

fn short_config(seed: u64, batches: usize) -> TrainConfig {
    TrainConfig {
        batch_size: 5,
        schedule: LrSchedule { batches_per_stage: batches, stagnation_window: 10_000, ..LrSchedule::default() },
        seed,
        ..TrainConfig::default()
    }
}

fn data(seed: u64, t: usize, d: usize) -> Matrix {
    let mut r = rng(seed);
    random_matrix(&mut r, t, d)
}

/// Records per-step facts about the state.
#[derive(Default)]
struct Watch {
    steps: u64,
    worst_norm: f64,
    max_rank: usize,
    x: Option<Matrix>,
}

impl TrainObserver for Watch {
    fn on_step(&mut self, _batch: u64, columns: &[usize], state: &ModelState) -> Result<()> {
        self.steps += 1;
        if let Some(u) = &state.basis {
            for j in 0..u.cols() {
                let n = u.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
                self.worst_norm = self.worst_norm.max((n - 1.0).abs());
            }
        }
        if state.variant() == Variant::RraeStrong {
            let xb = self.x.as_ref().unwrap().select_columns(columns)?;
            let z = state.decoder_input_matrix(&xb)?;
            let s = singular_values(&z)?;
            let rank = s.iter().filter(|&&v| v > 1e-10 * s[0]).count();
            self.max_rank = self.max_rank.max(rank);
        }
        Ok(())
    }
}

#[test]
fn weak_u_columns_stay_unit_after_every_step() {
    let x = data(1, 10, 12);
    let spec = small(Variant::RraeWeak, 10, 6).with_k_max(2);
    let state = ModelState::init_with_data(spec, &x, Normalization::identity(10), 3).unwrap();
    let mut w = Watch::default();
    let out = train_observed(state, &x, &short_config(3, 20), &mut w).unwrap();
    assert_eq!(w.steps, out.log.records.len() as u64);
    assert!(w.steps >= 60);
    assert!(w.worst_norm <= 1e-12, "{}", w.worst_norm);
}

#[test]
fn strong_decoder_input_rank_bounded_on_every_batch() {
    let x = data(2, 10, 13);
    for k in 1..=3 {
        let spec = small(Variant::RraeStrong, 10, 6).with_k_max(k);
        let state = ModelState::init(spec, 13, Normalization::identity(10), 4).unwrap();
        let mut w = Watch { x: Some(x.clone()), ..Watch::default() };
        train_observed(state, &x, &short_config(4, 10), &mut w).unwrap();
        assert!(w.steps > 0);
        assert!(w.max_rank <= k, "k = {k}, rank {}", w.max_rank);
    }
}

#[test]
fn strong_finalized_basis_is_orthonormal() {
    let x = data(3, 10, 15);
    let spec = small(Variant::RraeStrong, 10, 7).with_k_max(3);
    let state = ModelState::init(spec, 15, Normalization::identity(10), 5).unwrap();
    let out = train_observed(state, &x, &short_config(5, 10), &mut rrae::train::NoObserver).unwrap();
    let f = finalize_basis(&out.state, &x).unwrap();
    let gram = f.u.transpose().matmul(&f.u).unwrap();
    assert!(gram.sub(&Matrix::identity(3)).unwrap().max_abs() <= 1e-8);
    let rank = rrae::eval::numerical_rank(&f.u.matmul(&f.a).unwrap(), rrae::eval::RANK_TOLERANCE).unwrap();
    assert_eq!(rank, 3);
}

#[test]
fn weak_best_loss_improves_over_training() {
    let x = data(4, 10, 20);
    let spec = small(Variant::RraeWeak, 10, 6).with_k_max(2);
    let state = ModelState::init_with_data(spec, &x, Normalization::identity(10), 6).unwrap();
    let out = train_observed(state, &x, &short_config(6, 100), &mut rrae::train::NoObserver).unwrap();
    let losses: Vec<f64> = out.log.records.iter().map(|r| r.loss).collect();
    let best = |upto: usize| losses[..upto].iter().copied().fold(f64::INFINITY, f64::min);
    let tenth = losses.len() / 10;
    assert!(best(losses.len()) <= best(tenth));
}

#[test]
fn weak_latent_svd_init_matches_latent() {
    let x = data(5, 10, 9);
    let spec = small(Variant::RraeWeak, 10, 6).with_k_max(6);
    let state = ModelState::init_with_data(spec.clone(), &x, Normalization::identity(10), 1).unwrap();
    let y = state.encode_matrix(&x).unwrap();
    let ua = state.basis.as_ref().unwrap().matmul(state.coeffs.as_ref().unwrap()).unwrap();
    assert!(y.sub(&ua).unwrap().frobenius_norm() <= 1e-10 * y.frobenius_norm());

    let mut random = spec;
    random.weak_init = WeakInit::Random;
    let state = ModelState::init_with_data(random, &x, Normalization::identity(10), 1).unwrap();
    assert_eq!(state.coeffs.unwrap().max_abs(), 0.0);
}

#[test]
fn strong_equals_vanilla_when_truncation_is_exact() {
    let x = data(6, 8, 4);
    let vanilla = ModelState::init(small(Variant::Vanilla, 8, 4), 4, Normalization::identity(8), 9).unwrap();
    let mut strong = vanilla.clone();
    strong.spec.variant = Variant::RraeStrong;
    strong.spec.k_max = Some(4);
    let batch = [0, 1, 2, 3];
    let (lv, _) = batch_gradients(&vanilla, &x, &batch).unwrap();
    let (ls, _) = batch_gradients(&strong, &x, &batch).unwrap();
    assert!((lv - ls).abs() <= 1e-10 * lv.abs().max(1.0), "{lv} vs {ls}");
}

#[test]
fn diabolo_gives_one_coefficient_per_sample() {
    let ds = Dataset::generate(&DataConfig::new(Family::Shift)).unwrap();
    let spec = default_spec(&ds, Variant::Diabolo);
    assert_eq!(spec.latent_dim, 1);
    let x = ds.train_normalized().unwrap();
    let state = ModelState::init(spec, x.cols(), ds.norm.clone(), 0).unwrap();
    let f = finalize_basis(&state, &x).unwrap();
    assert_eq!(f.a.shape(), (1, 17));
}

#[test]
fn training_is_bitwise_reproducible() {
    let x = data(7, 10, 11);
    let run = || {
        let spec = small(Variant::RraeStrong, 10, 6).with_k_max(2);
        let state = ModelState::init(spec, 11, Normalization::identity(10), 2).unwrap();
        let out = train_observed(state, &x, &short_config(2, 15), &mut rrae::train::NoObserver).unwrap();
        let losses: Vec<u64> = out.log.records.iter().map(|r| r.loss.to_bits()).collect();
        (losses, serde_json::to_string(&out.state).unwrap())
    };
    assert_eq!(run(), run());
}

#[test]
fn restarts_keep_lowest_training_loss() {
    let mut cfg = DataConfig::new(Family::Shift);
    cfg.grid = Some(rrae::data::TimeGrid::new(0.0, 6.0, 12).unwrap());
    let ds = Dataset::generate(&cfg).unwrap();
    let mut spec = small(Variant::RraeStrong, 12, 6).with_k_max(1);
    spec.input_dim = 12;
    let mut tc = default_train_config(&ds, 0);
    tc.max_batches = Some(30);
    let (best, runs) = fit_best_of(&ds, &spec, &tc, &[0, 1, 2]).unwrap();
    assert_eq!(runs.len(), 3);
    let min = runs.iter().filter_map(|r| r.train_recon).fold(f64::INFINITY, f64::min);
    assert_eq!(best.log.final_losses.unwrap().recon, min);
    assert!(runs.iter().all(|r| r.status == TrainStatus::Capped));
}

#[test]
fn adabelief_sign_follows_first_moment() {
    let mut r = rng(8);
    let g = random_matrix(&mut r, 3, 4);
    let mut opt = AdaBelief::new(AdaBeliefConfig { eps: 1e3, ..AdaBeliefConfig::default() }, &[(3, 4)]);
    let mut p = Matrix::zeros(3, 4);
    opt.step(&mut [&mut p], std::slice::from_ref(&g), &[0.1], &["p"]).unwrap();
    for (dp, gv) in p.as_slice().iter().zip(g.as_slice()) {
        assert_eq!(dp.signum(), -gv.signum());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn weak_gradient_touches_only_batch_columns(
        seed in any::<u64>(),
        mask in proptest::collection::vec(any::<bool>(), 9),
    ) {
        let x = data(seed, 6, 9);
        let spec = small(Variant::RraeWeak, 6, 4).with_k_max(2);
        let state = ModelState::init_with_data(spec, &x, Normalization::identity(6), seed).unwrap();
        let first: Vec<usize> = (0..9).filter(|&j| mask[j]).collect();
        let second: Vec<usize> = (0..9).filter(|&j| !mask[j]).collect();
        prop_assume!(!first.is_empty() && !second.is_empty());
        let touched = |b: &[usize]| -> Vec<usize> {
            let (_, grads) = batch_gradients(&state, &x, b).unwrap();
            let ga = grads.last().unwrap();
            (0..9).filter(|&j| ga.column(j).iter().any(|&v| v != 0.0)).collect()
        };
        let (ta, tb) = (touched(&first), touched(&second));
        prop_assert!(ta.iter().all(|c| first.contains(c)));
        prop_assert!(tb.iter().all(|c| second.contains(c)));
    }

    #[test]
    fn strong_decoder_input_rank_at_most_k(seed in any::<u64>(), k in 1usize..=4, d in 4usize..=9) {
        let x = data(seed, 7, d);
        let spec = small(Variant::RraeStrong, 7, 6).with_k_max(k);
        let state = ModelState::init(spec, d, Normalization::identity(7), seed).unwrap();
        let s = singular_values(&state.decoder_input_matrix(&x).unwrap()).unwrap();
        prop_assert!(s.iter().filter(|&&v| v > 1e-10 * s[0]).count() <= k);
    }

    #[test]
    fn mlp_forward_is_deterministic(seed in any::<u64>()) {
        let x = data(seed, 5, 3);
        let state = ModelState::init(small(Variant::Vanilla, 5, 3), 3, Normalization::identity(5), seed).unwrap();
        let a = state.reconstruct_matrix(&x).unwrap();
        let b = state.reconstruct_matrix(&x).unwrap();
        prop_assert_eq!(a.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
