use proptest::prelude::*;
use strategist_core::space::{load_trajectory, normalize_trajectory, save_trajectory};
use strategist_core::{Normalizer, Sample, SearchSpace, Trajectory, TrajectoryError, TrajectoryF32};

fn bounds() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    proptest::collection::vec((-1e3f64..1e3, 1e-3f64..1e3), 1..6)
        .prop_map(|v| (v.iter().map(|p| p.0).collect(), v.iter().map(|p| p.0 + p.1).collect()))
}

proptest! {
    #[test]
    fn normalization_round_trips((lower, upper) in bounds(), fracs in proptest::collection::vec(0.0f64..=1.0, 6)) {
        let space = SearchSpace::new(lower.clone(), upper.clone()).unwrap();
        let map = Normalizer::new(&space).unwrap();
        let x: Vec<f64> = (0..lower.len()).map(|i| lower[i] + fracs[i] * (upper[i] - lower[i])).collect();
        let u = map.to_unit(&x);
        prop_assert!(u.iter().all(|v| (-1.0 - 1e-12..=1.0 + 1e-12).contains(v)));
        let back = map.from_unit(&u);
        for i in 0..x.len() {
            prop_assert!((back[i] - x[i]).abs() <= 1e-12 * (1.0 + x[i].abs()));
        }
        let lam: Vec<f64> = fracs[..x.len()].iter().map(|f| 0.01 + f).collect();
        let lam_back = map.lambda_from_unit(&map.lambda_to_unit(&lam));
        for i in 0..x.len() {
            prop_assert!((lam_back[i] - lam[i]).abs() <= 1e-12 * lam[i]);
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact(vals in proptest::collection::vec((-2.0f64..=2.0, -2.0f64..=2.0, any::<f64>().prop_filter("finite", |v| v.is_finite())), 1..12)) {
        let space = SearchSpace::cube(2, -2.0, 2.0).unwrap();
        let mut t = Trajectory::empty(space);
        for (a, b, f) in vals {
            let _ = t.push(Sample::new(vec![a, b], f));
        }
        let back = Trajectory::from_json(&t.to_json().unwrap()).unwrap();
        prop_assert_eq!(back.len(), t.len());
        for (p, q) in back.samples().iter().zip(t.samples()) {
            prop_assert_eq!(p.f.to_bits(), q.f.to_bits());
            prop_assert!(p.x.iter().zip(&q.x).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}

#[test]
fn bounds_are_inclusive() {
    let space = SearchSpace::cube(2, -1.0, 1.0).unwrap();
    let mut t = Trajectory::empty(space);
    t.push(Sample::new(vec![-1.0, 1.0], 0.0)).unwrap();
    let err = t.push(Sample::new(vec![1.0 + f64::EPSILON, 0.0], 0.0)).unwrap_err();
    assert!(matches!(err, TrajectoryError::OutOfBounds { record: 1, axis: 0, .. }), "{err}");
}

#[test]
fn file_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.json");
    let space = SearchSpace::cube(1, 0.0, 3.0).unwrap();
    let t = Trajectory::new(space, vec![Sample::new(vec![0.1], 1.0 / 3.0), Sample::new(vec![2.9], -7.25)]).unwrap();
    save_trajectory(&t, &path).unwrap();
    let back: Trajectory = load_trajectory(&path).unwrap();
    assert_eq!(back, t);

    std::fs::write(&path, r#"{"space":{"lower":[0,0],"upper":[1,1]},"samples":[{"x":[0.5,0.5],"f":1},{"x":[0.5],"f":2}]}"#).unwrap();
    let err = load_trajectory::<f64>(&path).unwrap_err();
    assert!(matches!(err, TrajectoryError::DimensionMismatch { record: 1, .. }), "{err}");
    assert!(err.to_string().contains('1'));

    std::fs::write(&path, r#"{"space":{"lower":[0],"upper":[1]},"samples":[{"x":[0.5],"f":1},{"x":[0.5],"f":2}]}"#).unwrap();
    assert!(matches!(load_trajectory::<f64>(&path).unwrap_err(), TrajectoryError::Duplicate { record: 1, first: 0 }));

    std::fs::write(&path, "{not json").unwrap();
    assert!(matches!(load_trajectory::<f64>(&path).unwrap_err(), TrajectoryError::Malformed(_)));
}

#[test]
fn normalized_trajectory_keeps_objectives() {
    let space = SearchSpace::new(vec![0.0, -4.0], vec![10.0, 4.0]).unwrap();
    let t = Trajectory::new(space, vec![Sample::new(vec![7.5, 0.0], 3.0), Sample::new(vec![0.0, 4.0], -1.0)]).unwrap();
    let (u, map) = normalize_trajectory(&t).unwrap();
    assert_eq!(u.samples()[0].x, vec![0.5, 0.0]);
    assert_eq!(u.samples()[1].x, vec![-1.0, 1.0]);
    assert_eq!(u.fs(), t.fs());
    assert_eq!(map.from_unit(&u.samples()[0].x), vec![7.5, 0.0]);
    assert_eq!(u.space().log_volume(), 2.0 * 2f64.ln());
}

#[test]
fn single_precision_trajectory() {
    let space = strategist_core::SearchSpaceF32::cube(1, 0.0, 2.0).unwrap();
    let t = TrajectoryF32::new(space, vec![strategist_core::space::Sample::new(vec![1.0f32], 2.0)]).unwrap();
    let (u, _) = normalize_trajectory(&t).unwrap();
    assert_eq!(u.samples()[0].x, vec![0.0f32]);
}
