use std::convert::Infallible;

use proptest::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use strategist_core::acquisition::{ei_from_prediction, expected_improvement, maximize_ei, run_bo};
use strategist_core::sampling::lhs;
use strategist_core::{BoParams, GpModel, Sample, SearchSpace, Termination, Trajectory};

fn ei_oracle(mean: f64, sd: f64, f_min: f64) -> f64 {
    if sd == 0.0 {
        return (f_min - mean).max(0.0);
    }
    let n = Normal::new(0.0, 1.0).unwrap();
    let z = (f_min - mean) / sd;
    (f_min - mean) * n.cdf(z) + sd * n.pdf(z)
}

#[test]
fn ei_matches_formula_on_dense_grid() {
    let m = GpModel::fit(&[vec![0.2], vec![0.7]], &[0.5, -0.3], &[3.0]).unwrap();
    for i in 0..1001 {
        let x = [i as f64 / 1000.0];
        let p = m.predict(&x);
        let got = expected_improvement(&m, -0.3, &x);
        let want = ei_oracle(p.mean, p.sd, -0.3);
        assert!((got - want).abs() < 1e-10, "x={}: {got} vs {want}", x[0]);
    }
}

#[test]
fn ei_vanishes_at_training_points() {
    let space = SearchSpace::cube(2, -1.0, 1.0).unwrap();
    let x = lhs(&space, 7, 5);
    let f: Vec<f64> = x.iter().map(|v| v[0] * v[0] + v[1]).collect();
    let m = GpModel::fit(&x, &f, &[2.0, 2.0]).unwrap();
    let f_min = f.iter().copied().fold(f64::INFINITY, f64::min);
    for xi in &x {
        assert!(expected_improvement(&m, f_min, xi) <= 1e-4 * (1.0 + m.sigma2().sqrt()));
    }
}

#[test]
fn ei_at_zero_gap_is_sd_times_density() {
    assert!((ei_from_prediction(0.0f64, 0.7, 0.0) - 0.7 * 0.398_942_280_401_432_7).abs() < 1e-15);
    assert_eq!(ei_from_prediction(2.0f64, 0.0, 1.0), 0.0);
    assert_eq!(ei_from_prediction(1.0f64, 0.0, 2.5), 1.5);
}

#[test]
fn ei_increases_with_sd() {
    for gap in [-2.0f64, -0.5, 0.0, 0.5, 2.0] {
        // beyond |z| ≈ 6 the increment φ(z)·Δsd falls below f64 resolution
        let sds: Vec<f64> = (1..200).map(|k| 0.01 * k as f64).filter(|sd| gap.abs() / sd <= 6.0).collect();
        for w in sds.windows(2) {
            let (a, b) = (ei_from_prediction(-gap, w[0], 0.0f64), ei_from_prediction(-gap, w[1], 0.0f64));
            assert!(b > a, "gap {gap}, sd {}", w[1]);
        }
    }
}

fn symmetric_fixture() -> GpModel {
    GpModel::fit(&[vec![-1.0], vec![0.0], vec![1.0], vec![2.0]], &[1.0, 0.0, 0.0, 1.0], &[1.0]).unwrap()
}

#[test]
fn symmetric_data_puts_argmax_at_midpoint() {
    let m = symmetric_fixture();
    let space = SearchSpace::cube(1, 0.0, 1.0).unwrap();
    let best = (0..=10_000)
        .map(|i| i as f64 / 10_000.0)
        .max_by(|a, b| expected_improvement(&m, 0.0, &[*a]).total_cmp(&expected_improvement(&m, 0.0, &[*b])))
        .unwrap();
    assert!((best - 0.5).abs() < 1e-3, "grid argmax {best}");
    let r = maximize_ei(&m, 0.0, &space, 10, 1);
    assert!((r.x[0] - 0.5).abs() < 1e-3, "{:?}", r);
    assert!(!r.flat);
}

#[test]
fn equal_values_give_flat_zero_landscape() {
    let m = GpModel::fit(&[vec![0.0], vec![1.0]], &[2.0, 2.0], &[1.0]).unwrap();
    assert_eq!(m.sigma2(), 0.0);
    let r = maximize_ei(&m, 2.0, &SearchSpace::cube(1, 0.0, 1.0).unwrap(), 10, 1);
    assert!(r.flat);
    assert_eq!(r.ei, 0.0);
}

#[test]
fn maximum_beats_audit_grid_1d() {
    let space = SearchSpace::cube(1, -2.0, 2.0).unwrap();
    let x = lhs(&space, 5, 11);
    let f: Vec<f64> = x.iter().map(|v| (3.0 * v[0]).sin() + 0.3 * v[0]).collect();
    let f_min = f.iter().copied().fold(f64::INFINITY, f64::min);
    let m = GpModel::fit(&x, &f, &[2.0]).unwrap();
    let r = maximize_ei(&m, f_min, &space, 20, 2);
    let audit = (0..10_000)
        .map(|i| expected_improvement(&m, f_min, &[-2.0 + 4.0 * (i as f64 + 0.5) / 10_000.0]))
        .fold(0.0, f64::max);
    assert!(r.ei >= audit - 1e-6, "{} < {audit}", r.ei);
    assert!(space.contains(&r.x));
}

#[test]
fn maximum_beats_audit_grid_2d() {
    let space = SearchSpace::new(vec![-1.0, 0.0], vec![1.0, 3.0]).unwrap();
    let x = lhs(&space, 6, 21);
    let f: Vec<f64> = x.iter().map(|v| (v[0] - 0.2).powi(2) + (v[1] - 1.0).powi(2)).collect();
    let f_min = f.iter().copied().fold(f64::INFINITY, f64::min);
    let m = GpModel::fit(&x, &f, &[1.0, 0.5]).unwrap();
    let r = maximize_ei(&m, f_min, &space, 20, 3);
    let mut audit: f64 = 0.0;
    for i in 0..100 {
        for j in 0..100 {
            let q = [-1.0 + 2.0 * (i as f64 + 0.5) / 100.0, 3.0 * (j as f64 + 0.5) / 100.0];
            audit = audit.max(expected_improvement(&m, f_min, &q));
        }
    }
    assert!(r.ei >= audit - 1e-6, "{} < {audit}", r.ei);
    assert!(space.contains(&r.x));
}

#[test]
fn maximum_is_at_least_every_start() {
    let space = SearchSpace::cube(3, -1.0, 1.0).unwrap();
    let x = lhs(&space, 8, 4);
    let f: Vec<f64> = x.iter().map(|v| v.iter().sum()).collect();
    let f_min = f.iter().copied().fold(f64::INFINITY, f64::min);
    let m = GpModel::fit(&x, &f, &[1.0; 3]).unwrap();
    let r = maximize_ei(&m, f_min, &space, 15, 77);
    for s in lhs(&space, 15, 77) {
        assert!(r.ei >= expected_improvement(&m, f_min, &s));
    }
}

#[test]
fn widely_separated_data_is_flagged_flat() {
    let m = GpModel::fit(&[vec![0.0], vec![1.0]], &[0.0, 1.0], &[1e8]).unwrap();
    let r = maximize_ei(&m, 0.0, &SearchSpace::cube(1, 0.0, 1.0).unwrap(), 5, 0);
    assert!(r.flat, "{:?}", r);
}

fn quadratic_initial(seed: u64) -> Trajectory {
    let space = SearchSpace::cube(1, -2.0, 2.0).unwrap();
    let samples = lhs(&space, 2, seed).into_iter().map(|x| Sample::new(x.clone(), x[0] * x[0])).collect();
    Trajectory::new(space, samples).unwrap()
}

#[test]
fn quadratic_is_solved_within_twenty_iterations() {
    let params = BoParams::isotropic(1, 1.0, 1e-12, 10).unwrap();
    let rec = run_bo(quadratic_initial(3), params, |x: &[f64]| Ok::<_, Infallible>(x[0] * x[0]), 20, 9).unwrap();
    let best = *rec.best_curve.last().unwrap();
    // dense-grid minimum of x² on [-2, 2] is 0
    assert!(best <= 0.01, "best {best}");
    assert!(rec.best_curve.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(rec.trajectory.len(), 2 + rec.iterations());
}

#[test]
fn runs_are_bit_reproducible() {
    let run = || {
        let params = BoParams::isotropic(1, 1.0, 1e-9, 8).unwrap();
        run_bo(quadratic_initial(5), params, |x: &[f64]| Ok::<_, Infallible>((x[0] - 0.3).powi(2)), 8, 44).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.trajectory.to_json().unwrap(), b.trajectory.to_json().unwrap());
    assert_eq!(a.best_curve, b.best_curve);
}

#[test]
fn zero_budget_returns_initial_trajectory() {
    let init = quadratic_initial(1);
    let params = BoParams::isotropic(1, 1.0, 1e-3, 4).unwrap();
    let rec = run_bo(init.clone(), params, |x: &[f64]| Ok::<_, Infallible>(x[0]), 0, 0).unwrap();
    assert_eq!(rec.trajectory, init);
    assert_eq!(rec.terminated_by, Termination::IterationBudget);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ei_is_nonnegative(
        seed in any::<u64>(),
        lam in 0.01f64..50.0,
        q in proptest::collection::vec(-3.0f64..3.0, 2),
        shift in -5.0f64..5.0,
    ) {
        let space = SearchSpace::cube(2, -2.0, 2.0).unwrap();
        let x = lhs(&space, 5, seed);
        let f: Vec<f64> = x.iter().map(|v| (v[0] * v[1]).sin() * 3.0).collect();
        let m = GpModel::fit(&x, &f, &[lam, lam]).unwrap();
        let f_min = f.iter().copied().fold(f64::INFINITY, f64::min) + shift;
        // 500 probes per case, 200 cases: 10^5 in total
        for k in 0..500 {
            let t = k as f64 / 500.0;
            let p = [q[0] * (1.0 - t) + t * (q[1] - 1.0), q[1] * t];
            prop_assert!(expected_improvement(&m, f_min, &p) >= 0.0);
        }
    }
}
