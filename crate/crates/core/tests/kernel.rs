mod common;

use std::f64::consts::PI;

use kolmogorov_jko::fundamental_solution::{beta_constant, Kernel};
use kolmogorov_jko::grid::{GridMeasure, TensorGrid};
use kolmogorov_jko::quadrature::GaussianFrame;
use kolmogorov_jko::KernelError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn constants_for_heat_and_kolmogorov() {
    for d in 1..=4 {
        let heat = (4.0 * PI).powf(-(d as f64) / 2.0);
        assert!(common::relative_error(beta_constant(1, d).unwrap(), heat) < 1e-12);
        let kolm = (3f64.sqrt() / (2.0 * PI)).powi(d as i32);
        assert!(common::relative_error(beta_constant(2, d).unwrap(), kolm) < 1e-12);
    }
    assert!(beta_constant(2, 0).is_err());
}

#[test]
fn order_one_is_the_heat_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for d in 1..=3 {
        let k = Kernel::<f64>::new(1, d).unwrap();
        for _ in 0..100 {
            let t = rng.random_range(0.05..4.0);
            let x = common::random_point(d, 2.0, &mut rng);
            let y = common::random_point(d, 2.0, &mut rng);
            let got = k.phi(t, &x, &y).unwrap();
            assert!(common::relative_error(got, common::heat_kernel(t, &x, &y)) < 1e-12);
        }
    }
}

#[test]
fn kernel_bounded_by_peak() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for n in 1..=4 {
        let k = Kernel::<f64>::new(n, 1).unwrap();
        for _ in 0..50 {
            let t = rng.random_range(0.1..3.0);
            let x = common::random_point(n, 2.0, &mut rng);
            let y = common::random_point(n, 2.0, &mut rng);
            let v = k.phi(t, &x, &y).unwrap();
            assert!(v >= 0.0 && v <= k.peak(t) * (1.0 + 1e-14));
        }
    }
    let k = Kernel::<f64>::new(2, 1).unwrap();
    assert!((k.phi(1.0, &[-0.4, 0.0], &[-0.4, 0.0]).unwrap() - 3f64.sqrt() / (2.0 * PI)).abs() < 1e-15);
}

#[test]
fn unit_mass_over_time_and_base_point() {
    for n in 1..=3 {
        let k = Kernel::<f64>::new(n, 1).unwrap();
        for t in [0.3, 1.0, 2.5] {
            for shift in [-1.0, 0.0, 1.5] {
                let y: Vec<f64> = (0..n).map(|i| shift * (1.0 - 0.3 * i as f64)).collect();
                let mass = k.normalization(t, &y, 12, 1.5f64.sqrt()).unwrap();
                assert!((mass - 1.0).abs() < 1e-6, "n={n} t={t} y={y:?}: {mass}");
            }
        }
    }
    let k = Kernel::<f64>::new(1, 2).unwrap();
    assert!((k.normalization(0.4, &[0.2, -0.1], 8, 1.0).unwrap() - 1.0).abs() < 1e-10);
}

#[test]
fn backward_equation_residuals() {
    let k1 = Kernel::<f64>::new(1, 1).unwrap();
    assert!(k1.pde_residual(1.0, &[0.4], &[-0.3], 1e-4).unwrap().abs() < 1e-5);
    let k2 = Kernel::<f64>::new(2, 1).unwrap();
    assert!(k2.pde_residual(1.0, &[0.3, -0.2], &[0.0, 0.0], 1e-4).unwrap().abs() < 1e-4);

    let k3 = Kernel::<f64>::new(3, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let t = rng.random_range(0.5..2.0);
        let x = common::random_point(3, 1.0, &mut rng);
        let y = common::random_point(3, 1.0, &mut rng);
        worst = worst.max(k3.pde_residual(t, &x, &y, 1e-4).unwrap().abs());
    }
    assert!(worst < 1e-3, "worst n=3 residual {worst}");
}

#[test]
fn residual_refines_at_second_order() {
    let k = Kernel::<f64>::new(2, 1).unwrap();
    let (t, x, y) = (0.8, [0.5, -0.4], [0.1, 0.3]);
    let coarse = k.pde_residual(t, &x, &y, 1e-2).unwrap().abs();
    let fine = k.pde_residual(t, &x, &y, 1e-3).unwrap().abs();
    let slope = (coarse / fine).log10();
    assert!((slope - 2.0).abs() < 0.3, "slope {slope}");
}

#[test]
fn too_small_time_for_differencing() {
    let k = Kernel::<f64>::new(2, 1).unwrap();
    assert!(matches!(k.pde_residual(5e-4, &[0.0, 0.0], &[0.0, 0.0], 1e-4), Err(KernelError::StepTooLarge { .. })));
}

#[test]
fn nonpositive_time_is_rejected() {
    let k = Kernel::<f64>::new(2, 1).unwrap();
    for t in [0.0, -1.0, f64::NAN] {
        assert!(matches!(k.phi(t, &[0.0; 2], &[0.0; 2]), Err(KernelError::NonPositiveTime(_))));
    }
    let grid = TensorGrid::cube(-1.0, 1.0, 4, 1).unwrap();
    let rho = GridMeasure::from_density(&grid, |_| 1.0).unwrap();
    let k1 = Kernel::<f64>::new(1, 1).unwrap();
    assert!(matches!(k1.evolve_by_kernel(&rho, 0.0), Err(KernelError::NonPositiveTime(_))));
}

#[test]
fn dirac_limit_gaussian_test_function() {
    let k = Kernel::<f64>::new(1, 1).unwrap();
    let times = [0.5, 0.1, 0.02, 0.004, 0.0008, 0.0001];
    let table = k.dirac_limit_check(&[0.0], &times, |x| (-x[0] * x[0]).exp()).unwrap();
    for row in &table.rows {
        let exact = (1.0 + 4.0 * row.t).powf(-0.5);
        assert!((row.value - exact).abs() < 1e-9, "t={}: {} vs {exact}", row.t, row.value);
    }
    assert!(table.monotone);
    assert!(table.final_error() < 1e-3);

    let ones = k.dirac_limit_check(&[0.7], &times, |_| 1.0).unwrap();
    assert!(ones.rows.iter().all(|r| r.error < 1e-9));
}

#[test]
fn dirac_limit_bump_order_two() {
    let k = Kernel::<f64>::new(2, 1).unwrap();
    let y = [0.2, -0.1];
    let bump = |x: &[f64]| {
        let s = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)) / 4.0;
        if s < 1.0 {
            (-1.0 / (1.0 - s)).exp()
        } else {
            0.0
        }
    };
    let table = k.dirac_limit_check(&y, &[0.3, 0.1, 0.03, 0.01, 0.003], bump).unwrap();
    assert!(table.monotone, "{:?}", table.rows);
    assert!(table.final_error() < 1e-3);
}

#[test]
fn chapman_kolmogorov_order_two() {
    let k = Kernel::<f64>::new(2, 1).unwrap();
    let (s, t) = (0.4, 0.7);
    let (x, y) = ([0.3, -0.5], [-0.2, 0.4]);
    let (a, mu) = k.gaussian_form(t, &y).unwrap();
    let frame = GaussianFrame::new(a, mu, 1.5f64.sqrt()).unwrap();
    let composed = frame.gauss_hermite(30, |z| k.phi(s, &x, z).unwrap() * k.phi(t, z, &y).unwrap());
    let direct = k.phi(s + t, &x, &y).unwrap();
    assert!(common::relative_error(composed, direct) < 1e-3, "{composed} vs {direct}");
}

#[test]
fn evolved_dirac_matches_heat_samples() {
    let k = Kernel::<f64>::new(1, 1).unwrap();
    let grid = TensorGrid::cube(-8.0, 8.0, 321, 1).unwrap();
    let mut w = vec![0.0; grid.len()];
    w[160] = 1.0;
    let rho0 = GridMeasure::on_grid(&grid, w).unwrap();
    let out = k.evolve_by_kernel(&rho0, 1.0).unwrap();
    let vol = grid.cell_volume();
    let exact: Vec<f64> = (0..grid.len()).map(|i| common::heat_kernel(1.0, &grid.point(i), &[0.0]) * vol).collect();
    let l1: f64 = out.measure.weights().iter().zip(&exact).map(|(a, b)| (a - b).abs()).sum();
    assert!(l1 < 1e-3, "L1 {l1}");
    assert!(out.measure.weights().iter().all(|w| *w >= 0.0));
    assert!((out.measure.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn evolved_gaussian_spreads_over_time() {
    let k = Kernel::<f64>::new(2, 1).unwrap();
    // Times large enough that the kernel is resolved in x1 by 0.25-wide cells.
    let grid = TensorGrid::cube(-8.0, 8.0, 64, 2).unwrap();
    let rho0 = GridMeasure::from_density(&grid, |x| (-(x[0] * x[0] + x[1] * x[1])).exp()).unwrap();
    let mut prev = rho0.second_moment();
    for t in [1.0, 1.5, 2.0] {
        let m2 = k.evolve_by_kernel(&rho0, t).unwrap().measure.second_moment();
        assert!(m2 > prev, "t={t}: {m2} <= {prev}");
        prev = m2;
    }
}

#[test]
fn coarse_output_grid_is_reported() {
    let k = Kernel::<f64>::new(1, 1).unwrap();
    let grid = TensorGrid::cube(-1.0, 1.0, 3, 1).unwrap();
    let rho0 = GridMeasure::on_grid(&grid, vec![0.0, 1.0, 0.0]).unwrap();
    assert!(matches!(k.evolve_by_kernel(&rho0, 0.001), Err(KernelError::GridTooCoarse(_))));
}
