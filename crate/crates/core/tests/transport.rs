mod common;

use kolmogorov_jko::cost_kernel::CostEvaluator;
use kolmogorov_jko::grid::GridMeasure;
use kolmogorov_jko::matrix::Matrix;
use kolmogorov_jko::optimal_transport::{
    cost_matrix, median_cost, solve_entropic, solve_entropic_with_cost, solve_exact, solve_exact_with_cost,
    wasserstein2_euclidean, EntropicConfig, Method, MARGINAL_TOL,
};
use kolmogorov_jko::TransportError;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn uniform_cloud(len: usize, dim: usize, rng: &mut ChaCha8Rng) -> GridMeasure {
    let points = common::random_point(len * dim, 1.5, rng);
    GridMeasure::new(dim, points, vec![1.0 / len as f64; len]).unwrap()
}

fn weighted_cloud(len: usize, dim: usize, rng: &mut ChaCha8Rng) -> GridMeasure {
    let points = common::random_point(len * dim, 1.5, rng);
    GridMeasure::new(dim, points, common::random_weights(len, rng)).unwrap()
}

fn as_rows(m: &Matrix<f64>) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

#[test]
fn cost_matrix_entries() {
    let ev1 = CostEvaluator::<f64>::new(1, 1).unwrap();
    let s = GridMeasure::new(1, vec![0.0, 1.0, 3.0], vec![0.2, 0.3, 0.5]).unwrap();
    let t = GridMeasure::new(1, vec![-1.0, 2.0], vec![0.5, 0.5]).unwrap();
    let c = cost_matrix(&ev1, 0.3, &s, &t).unwrap();
    for i in 0..3 {
        for j in 0..2 {
            assert!((c[(i, j)] - (s.point(i)[0] - t.point(j)[0]).powi(2)).abs() < 1e-14);
        }
    }

    let ev2 = CostEvaluator::<f64>::new(2, 1).unwrap();
    let x = GridMeasure::dirac(vec![0.4, -0.7]);
    let c = cost_matrix(&ev2, 0.25, &x, &x).unwrap();
    assert_eq!((c.rows(), c.cols()), (1, 1));
    assert!((c[(0, 0)] - 12.0 * 0.49).abs() < 1e-12);

    assert!(matches!(cost_matrix(&ev2, 0.0, &x, &x), Err(TransportError::NonPositiveStep(_))));
    assert!(cost_matrix(&ev2, 1.0, &s, &t).is_err());
}

#[test]
fn exact_matches_permutation_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for n in [1, 2] {
        let ev = CostEvaluator::<f64>::new(n, 1).unwrap();
        for _ in 0..20 {
            let s = uniform_cloud(5, n, &mut rng);
            let t = uniform_cloud(5, n, &mut rng);
            let c = cost_matrix(&ev, 0.5, &s, &t).unwrap();
            let plan = solve_exact(&ev, 0.5, &s, &t).unwrap();
            let brute = common::permutation_minimum(&as_rows(&c));
            assert!((plan.cost_value - brute).abs() < 1e-10, "{} vs {brute}", plan.cost_value);
            assert!(plan.marginal_error(s.weights(), t.weights()) < MARGINAL_TOL);
            assert_eq!(plan.method, Method::Exact);
        }
    }
}

#[test]
fn exact_beats_random_feasible_plans() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let ev = CostEvaluator::<f64>::new(2, 1).unwrap();
    let s = weighted_cloud(9, 2, &mut rng);
    let t = weighted_cloud(7, 2, &mut rng);
    let c = cost_matrix(&ev, 0.4, &s, &t).unwrap();
    let plan = solve_exact(&ev, 0.4, &s, &t).unwrap();
    assert!((plan.cost_under(&c) - plan.cost_value).abs() < 1e-12);
    for _ in 0..100 {
        let p = common::random_feasible_plan(s.weights(), t.weights(), &mut rng);
        let value: f64 = (0..9).flat_map(|i| (0..7).map(move |j| (i, j))).map(|(i, j)| p[i][j] * c[(i, j)]).sum();
        assert!(plan.cost_value <= value + 1e-12);
    }
}

#[test]
fn exact_size_guard_is_inclusive() {
    let c = Matrix::from_fn(100, 100, |i, j| ((i as f64) - (j as f64)).abs());
    let a = vec![0.01; 100];
    let plan = solve_exact_with_cost(&c, &a, &a).unwrap();
    assert!(plan.cost_value.abs() < 1e-12);
    let c = Matrix::from_fn(101, 100, |_, _| 1.0);
    let a101 = vec![1.0 / 101.0; 101];
    assert!(matches!(solve_exact_with_cost(&c, &a101, &a), Err(TransportError::TooLarge { .. })));
}

#[test]
fn trivial_instances() {
    let ev = CostEvaluator::<f64>::new(1, 1).unwrap();
    let two = GridMeasure::new(1, vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
    assert!(solve_exact(&ev, 1.0, &two, &two).unwrap().cost_value.abs() < 1e-15);

    let ev2 = CostEvaluator::<f64>::new(2, 1).unwrap();
    let x = GridMeasure::dirac(vec![1.0, 0.5]);
    let plan = solve_exact(&ev2, 0.2, &x, &x).unwrap();
    assert_eq!(plan.dense()[(0, 0)], 1.0);
    assert!((plan.cost_value - ev2.cost(0.2, &[1.0, 0.5], &[1.0, 0.5]).unwrap()).abs() < 1e-14);
}

#[test]
fn entropic_close_to_exact_at_small_epsilon() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for n in [1, 2] {
        let ev = CostEvaluator::<f64>::new(n, 1).unwrap();
        for _ in 0..20 {
            let s = weighted_cloud(5, n, &mut rng);
            let t = weighted_cloud(5, n, &mut rng);
            let c = cost_matrix(&ev, 0.5, &s, &t).unwrap();
            let exact = solve_exact(&ev, 0.5, &s, &t).unwrap().cost_value;
            let cfg = EntropicConfig::new(1e-3 * median_cost(&c));
            let plan = solve_entropic(&ev, 0.5, &s, &t, &cfg).unwrap();
            assert!(plan.cost_value <= exact * 1.01 + 1e-12, "n={n}: {} vs {exact}", plan.cost_value);
            assert!(plan.cost_value >= exact * (1.0 - 1e-8), "{} below {exact}", plan.cost_value);
            assert!(plan.marginal_error(s.weights(), t.weights()) < cfg.tol * 10.0);
        }
    }
}

#[test]
fn entropic_cost_falls_with_epsilon() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for n in [1, 2] {
        let ev = CostEvaluator::<f64>::new(n, 1).unwrap();
        for _ in 0..10 {
            let s = weighted_cloud(6, n, &mut rng);
            let t = weighted_cloud(6, n, &mut rng);
            let c = cost_matrix(&ev, 0.5, &s, &t).unwrap();
            let med = median_cost(&c);
            let exact = solve_exact_with_cost(&c, s.weights(), t.weights()).unwrap().cost_value;
            let mut prev = f64::INFINITY;
            for scale in [1.0, 0.1, 0.01] {
                let cfg = EntropicConfig::new(scale * med);
                let v = solve_entropic_with_cost(&c, s.weights(), t.weights(), &cfg).unwrap().cost_value;
                assert!(
                    v <= prev * (1.0 + 1e-8) && v >= exact * (1.0 - 1e-8),
                    "scale {scale}: {v}, prev {prev}, exact {exact}"
                );
                prev = v;
            }
        }
    }
}

#[test]
fn entropic_self_transport_goes_diagonal() {
    let ev = CostEvaluator::<f64>::new(1, 1).unwrap();
    let m = GridMeasure::new(1, vec![-1.0, 0.0, 0.5, 2.0], vec![0.1, 0.4, 0.3, 0.2]).unwrap();
    let mut prev = f64::INFINITY;
    for eps in [0.1, 0.01, 0.001] {
        let plan = solve_entropic(&ev, 1.0, &m, &m, &EntropicConfig::new(eps)).unwrap();
        assert!(plan.cost_value < prev);
        prev = plan.cost_value;
    }
    assert!(prev < 1e-10);
}

#[test]
fn entropic_nonconvergence_returns_plan() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let s = weighted_cloud(6, 1, &mut rng);
    let t = weighted_cloud(6, 1, &mut rng);
    let ev = CostEvaluator::<f64>::new(1, 1).unwrap();
    let cfg = EntropicConfig { epsilon: 1e-4, max_iters: 2, tol: 1e-14 };
    match solve_entropic(&ev, 1.0, &s, &t, &cfg) {
        Err(TransportError::NotConverged { plan, violation, .. }) => {
            assert!(violation > 0.0);
            assert_eq!((plan.rows, plan.cols), (6, 6));
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
    assert!(matches!(
        solve_entropic(&ev, 1.0, &s, &t, &EntropicConfig::new(0.0)),
        Err(TransportError::NonPositiveEpsilon(_))
    ));
}

#[test]
fn euclidean_distance_cases() {
    let a = GridMeasure::dirac(vec![1.0, -2.0]);
    let b = GridMeasure::dirac(vec![-0.5, 0.0]);
    assert!((wasserstein2_euclidean(&a, &b).unwrap() - 6.25).abs() < 1e-14);
    assert_eq!(wasserstein2_euclidean(&a, &a).unwrap(), 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(36);
    for _ in 0..50 {
        let xs = common::random_point(2, 2.0, &mut rng);
        let ys = common::random_point(2, 2.0, &mut rng);
        let s = GridMeasure::new(1, xs.clone(), vec![0.5, 0.5]).unwrap();
        let t = GridMeasure::new(1, ys.clone(), vec![0.5, 0.5]).unwrap();
        let want = common::sorted_w2(xs, ys);
        assert!((wasserstein2_euclidean(&s, &t).unwrap() - want).abs() < 1e-12);
    }
    for _ in 0..10 {
        let s = uniform_cloud(6, 2, &mut rng);
        let t = uniform_cloud(6, 2, &mut rng);
        let c: Vec<Vec<f64>> = (0..6)
            .map(|i| (0..6).map(|j| s.point(i).iter().zip(t.point(j)).map(|(p, q)| (p - q).powi(2)).sum()).collect())
            .collect();
        let want = common::permutation_minimum(&c);
        assert!((wasserstein2_euclidean(&s, &t).unwrap() - want).abs() < 1e-10);
    }
}

#[test]
fn transport_cost_is_not_symmetric() {
    let ev = CostEvaluator::<f64>::new(2, 1).unwrap();
    let x = GridMeasure::dirac(vec![0.0, 1.0]);
    let y = GridMeasure::dirac(vec![1.0, 0.0]);
    let xy = solve_exact(&ev, 1.0, &x, &y).unwrap().cost_value;
    let yx = solve_exact(&ev, 1.0, &y, &x).unwrap().cost_value;
    assert!((xy - yx).abs() > 1e-3, "{xy} vs {yx}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn relabelling_keeps_cost(seed in any::<u64>(), n in 1usize..=2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ev = CostEvaluator::<f64>::new(n, 1).unwrap();
        let s = weighted_cloud(6, n, &mut rng);
        let t = weighted_cloud(5, n, &mut rng);
        let base = solve_exact(&ev, 0.7, &s, &t).unwrap().cost_value;

        let shuffle = |m: &GridMeasure, rng: &mut ChaCha8Rng| {
            let mut idx: Vec<usize> = (0..m.len()).collect();
            for k in (1..idx.len()).rev() {
                idx.swap(k, rng.random_range(0..=k));
            }
            let pts = idx.iter().flat_map(|&i| m.point(i).to_vec()).collect();
            let w = idx.iter().map(|&i| m.weights()[i]).collect();
            GridMeasure::new(m.dim(), pts, w).unwrap()
        };
        let s2 = shuffle(&s, &mut rng);
        let t2 = shuffle(&t, &mut rng);
        let moved = solve_exact(&ev, 0.7, &s2, &t2).unwrap().cost_value;
        prop_assert!((moved - base).abs() < 1e-12 * (1.0 + base));

        let cfg = EntropicConfig::new(0.05);
        let e1 = solve_entropic(&ev, 0.7, &s, &t, &cfg).unwrap().cost_value;
        let e2 = solve_entropic(&ev, 0.7, &s2, &t2, &cfg).unwrap().cost_value;
        prop_assert!((e1 - e2).abs() < 1e-8 * (1.0 + e1));
    }

    #[test]
    fn returned_plans_are_feasible(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ev = CostEvaluator::<f64>::new(2, 1).unwrap();
        let s = weighted_cloud(7, 2, &mut rng);
        let t = weighted_cloud(8, 2, &mut rng);
        let p = solve_exact(&ev, 0.3, &s, &t).unwrap();
        prop_assert!(p.marginal_error(s.weights(), t.weights()) < MARGINAL_TOL);
        prop_assert!(p.entries.iter().all(|e| e.2 >= 0.0));
        let q = solve_entropic(&ev, 0.3, &s, &t, &EntropicConfig::new(0.1)).unwrap();
        prop_assert!(q.marginal_error(s.weights(), t.weights()) < MARGINAL_TOL);
    }
}
