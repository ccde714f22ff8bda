//! Independent oracles shared by the integration tests.
//!
//! Nothing here calls into the closed-form matrices of the library: the cost
//! comes from solving the boundary-value problem for the optimal polynomial
//! directly, transport values come from enumeration or sorting, and the
//! reference densities are written out analytically.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// `(k)_j = k (k-1) ... (k-j+1)` as `f64`.
fn falling(k: usize, j: usize) -> f64 {
    (0..j).map(|m| (k - m) as f64).product()
}

/// `t inf int_0^t |xi^(n)|^2` by solving for the minimizing polynomial of degree `2n-1`.
///
/// The curve is rescaled to `[0, 1]`: with `eta(s) = xi(t s)` the boundary data
/// become `t^k x_{k+1}` and `t^k y_{k+1}`, and the cost is
/// `t^{2-2n} int_0^1 |eta^(n)|^2`.
pub fn polynomial_cost(n: usize, d: usize, t: f64, x: &[f64], y: &[f64]) -> f64 {
    let deg = 2 * n;
    let mut sys = DMatrix::<f64>::zeros(deg, deg);
    for k in 0..n {
        // eta^(k)(0) = k! c_k
        sys[(k, k)] = falling(k, k);
        // eta^(k)(1) = sum_{m>=k} (m)_k c_m
        for m in k..deg {
            sys[(n + k, m)] = falling(m, k);
        }
    }
    let lu = sys.lu();
    let mut total = 0.0;
    for a in 0..d {
        let rhs = DVector::from_fn(deg, |r, _| {
            let (k, v) = if r < n { (r, x[r * d + a]) } else { (r - n, y[(r - n) * d + a]) };
            t.powi(k as i32) * v
        });
        let c = lu.solve(&rhs).expect("Hermite system is regular");
        // int_0^1 (sum_m (m)_n c_m s^{m-n})^2 ds
        for p in n..deg {
            for q in n..deg {
                total += c[p] * c[q] * falling(p, n) * falling(q, n) / (p + q - 2 * n + 1) as f64;
            }
        }
    }
    t.powi(2 - 2 * n as i32) * total
}

/// Heat kernel `(4 pi t)^{-d/2} exp(-|x-y|^2 / (4t))`.
pub fn heat_kernel(t: f64, x: &[f64], y: &[f64]) -> f64 {
    let d = x.len() as f64;
    let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (4.0 * std::f64::consts::PI * t).powf(-d / 2.0) * (-r2 / (4.0 * t)).exp()
}

/// Differential entropy of a one-dimensional Gaussian with variance `var`.
pub fn gaussian_entropy(var: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * var).ln()
}

/// Ornstein-Uhlenbeck marginal density at time `t` for `dX = -X dt + sqrt(2) dW`
/// started from `N(m, s0)` in one dimension.
pub fn ou_density(t: f64, m: f64, s0: f64, x: f64) -> f64 {
    let mean = m * (-t).exp();
    let var = s0 * (-2.0 * t).exp() + 1.0 - (-2.0 * t).exp();
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Minimum of `sum_i cost[i][sigma(i)] / m` over permutations (Heap's algorithm).
pub fn permutation_minimum(cost: &[Vec<f64>]) -> f64 {
    let m = cost.len();
    let mut perm: Vec<usize> = (0..m).collect();
    let eval = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>() / m as f64;
    let mut best = eval(&perm);
    let mut c = vec![0usize; m];
    let mut i = 0;
    while i < m {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(eval(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

/// `W_2^2` between two uniform one-dimensional point clouds of equal size.
pub fn sorted_w2(mut xs: Vec<f64>, mut ys: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    xs.iter().zip(&ys).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / xs.len() as f64
}

/// A feasible coupling of `a` and `b` from the north-west corner rule applied
/// to random orderings of rows and columns.
pub fn random_feasible_plan(a: &[f64], b: &[f64], rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut rows: Vec<usize> = (0..a.len()).collect();
    let mut cols: Vec<usize> = (0..b.len()).collect();
    for k in (1..rows.len()).rev() {
        rows.swap(k, rng.random_range(0..=k));
    }
    for k in (1..cols.len()).rev() {
        cols.swap(k, rng.random_range(0..=k));
    }
    let mut plan = vec![vec![0.0; b.len()]; a.len()];
    let (mut ra, mut rb) = (a[rows[0]], b[cols[0]]);
    let (mut i, mut j) = (0, 0);
    while i < rows.len() && j < cols.len() {
        let m = ra.min(rb);
        plan[rows[i]][cols[j]] += m;
        ra -= m;
        rb -= m;
        if ra <= rb {
            i += 1;
            if i < rows.len() {
                ra = a[rows[i]];
            }
        } else {
            j += 1;
            if j < cols.len() {
                rb = b[cols[j]];
            }
        }
    }
    plan
}

/// Random probability vector with entries bounded away from zero.
pub fn random_weights(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| rng.random_range(0.2..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

pub fn random_point(len: usize, scale: f64, rng: &mut impl Rng) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn relative_error(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}
