mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use rrae::data::{gen_stair, sample_params, DataConfig, Dataset, Family, Normalization, StairParams, TimeGrid};
use rrae::eval::{
    entropy, interpolate_coeffs, interpolation_weights, numerical_rank, relative_error, CoefficientMap, ErrorMetric,
};
use rrae::linalg::Matrix;

#[test]
fn stair_at_three_on_unit_grid() {
    let t = TimeGrid::new(0.0, 1.0, 200).unwrap().values();
    let x = gen_stair(&t, 3.0, &StairParams::default()).unwrap();
    assert_eq!(x[0], 0.0);
    assert!(x.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn regeneration_is_bit_identical_for_every_family() {
    for family in [Family::Shift, Family::Stair, Family::Freqs, Family::Gauss] {
        let a = Dataset::generate(&DataConfig::new(family)).unwrap();
        let b = Dataset::generate(&DataConfig::new(family)).unwrap();
        let bits = |m: &Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.train), bits(&b.train));
        assert_eq!(bits(&a.test), bits(&b.test));
    }
}

#[test]
fn test_points_lie_inside_training_hull() {
    for family in [Family::Shift, Family::Stair, Family::Freqs, Family::Gauss] {
        let ds = Dataset::generate(&DataConfig::new(family)).unwrap();
        for p in &ds.params.test {
            assert!(ds.params.contains(p), "{family}: {p:?}");
        }
    }
}

#[test]
fn interpolation_weights_are_interior_and_increasing() {
    for steps in 1..10 {
        let w = interpolation_weights(steps);
        assert_eq!(w.len(), steps);
        assert!(w.iter().all(|&v| v > 0.0 && v < 1.0));
        assert!(w.windows(2).all(|p| p[1] > p[0]));
    }
}

fn random_probs(rng: &mut impl Rng, n: usize, c: usize) -> Matrix {
    let mut p = Matrix::from_fn(n, c, |_, _| rng.gen_range(0.0..1.0_f64).powi(3));
    for i in 0..n {
        let s: f64 = p.row(i).iter().sum();
        for j in 0..c {
            p[(i, j)] /= s;
        }
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn stair_never_decreases(p in 1.0f64..=5.0, end in 0.01f64..20.0, n in 2usize..300) {
        let t = TimeGrid::new(0.0, end, n).unwrap().values();
        let x = gen_stair(&t, p, &StairParams::default()).unwrap();
        prop_assert!(x.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn normalization_standardizes_and_inverts(seed in any::<u64>(), t in 1usize..12, d in 2usize..12) {
        let mut r = rng(seed);
        let x = Matrix::from_fn(t, d, |_, _| r.gen_range(-50.0..50.0));
        let norm = Normalization::fit(&x).unwrap();
        let xn = norm.apply(&x).unwrap();
        for i in 0..t {
            let row = xn.row(i);
            let mu = row.iter().sum::<f64>() / d as f64;
            let sd = (row.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / d as f64).sqrt();
            prop_assert!(mu.abs() <= 1e-12);
            prop_assert!((sd - 1.0).abs() <= 1e-10);
        }
        let back = norm.invert(&xn).unwrap();
        prop_assert!(back.sub(&x).unwrap().max_abs() <= 1e-11);
    }

    #[test]
    fn one_dimensional_interpolation_reproduces_knots(seed in any::<u64>(), n in 2usize..20, k in 1usize..4) {
        let mut r = rng(seed);
        let mut knots: Vec<f64> = (0..n).map(|i| i as f64 + r.gen_range(0.0..0.9)).collect();
        knots.sort_by(f64::total_cmp);
        let params: Vec<Vec<f64>> = knots.iter().map(|&v| vec![v]).collect();
        let a = random_matrix(&mut r, k, n);
        let map = CoefficientMap::new(&params, a.clone()).unwrap();
        let back = interpolate_coeffs(&map, &params).unwrap();
        prop_assert_eq!(back, a);
    }

    #[test]
    fn bilinear_interpolation_reproduces_knots_and_stays_in_cell_range(seed in any::<u64>()) {
        let ps = sample_params(Family::Gauss, &[4, 5], 30, &[seed, seed ^ 1]).unwrap();
        let mut r = rng(seed);
        let a = random_matrix(&mut r, 2, ps.train.len());
        let map = CoefficientMap::from_params(&ps, a.clone()).unwrap();
        prop_assert_eq!(interpolate_coeffs(&map, &ps.train).unwrap(), a.clone());
        let lo = a.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
        let hi = a.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let inside = interpolate_coeffs(&map, &ps.test).unwrap();
        prop_assert!(inside.as_slice().iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
    }

    #[test]
    fn entropy_bounded_by_log_classes(seed in any::<u64>(), n in 1usize..20, c in 2usize..15) {
        let mut r = rng(seed);
        let h = entropy(&random_probs(&mut r, n, c)).unwrap();
        prop_assert!(h >= 0.0 && h <= (c as f64).ln() + 1e-12);
    }

    #[test]
    fn relative_error_is_scale_consistent(seed in any::<u64>(), c in prop_oneof![-1e3f64..-1e-3, 1e-3f64..1e3]) {
        let mut r = rng(seed);
        let x = random_matrix(&mut r, 6, 5);
        let y = random_matrix(&mut r, 6, 5);
        for metric in [ErrorMetric::PerColumn, ErrorMetric::Global] {
            let e1 = relative_error(&x, &y, metric).unwrap();
            let e2 = relative_error(&x.scale(c), &y.scale(c), metric).unwrap();
            prop_assert!((e1 - e2).abs() <= 1e-10 * e1.max(1.0));
        }
    }

    #[test]
    fn numerical_rank_of_low_rank_product(seed in any::<u64>(), k in 1usize..5) {
        let mut r = rng(seed);
        let y = random_matrix(&mut r, 12, k).matmul(&random_matrix(&mut r, k, 9)).unwrap();
        prop_assert_eq!(numerical_rank(&y, 1e-6).unwrap(), k);
    }
}
