//! Discrete transport with the mean-squared-derivative cost.
//!
//! The cost is not symmetric for `n >= 2`, so nothing here assumes `W(a, b) = W(b, a)`.

mod entropic;
mod exact;

use rayon::prelude::*;
use serde::Serialize;

use crate::cost_kernel::CostEvaluator;
use crate::error::TransportError;
use crate::grid::GridMeasure;
use crate::matrix::Matrix;

/// Largest `|source| * |target|` accepted by the exact solver.
pub const EXACT_LIMIT: usize = 10_000;

/// Marginal tolerance for returned plans.
pub const MARGINAL_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Exact,
    Entropic { epsilon: f64 },
}

/// Sparse coupling between a source with `rows` atoms and a target with `cols` atoms.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransportPlan {
    pub rows: usize,
    pub cols: usize,
    /// Nonzero entries `(i, j, mass)`.
    pub entries: Vec<(usize, usize, f64)>,
    /// `sum plan_ij C_ij`, without any entropy term.
    pub cost_value: f64,
    pub method: Method,
}

impl TransportPlan {
    pub fn dense(&self) -> Matrix<f64> {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for &(i, j, w) in &self.entries {
            m[(i, j)] += w;
        }
        m
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        for &(i, _, w) in &self.entries {
            out[i] += w;
        }
        out
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for &(_, j, w) in &self.entries {
            out[j] += w;
        }
        out
    }

    /// Largest absolute marginal error against the given weights.
    pub fn marginal_error(&self, a: &[f64], b: &[f64]) -> f64 {
        let r = self.row_sums().iter().zip(a).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let c = self.col_sums().iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        r.max(c)
    }

    /// Recompute `sum plan_ij cost_ij` against another cost.
    pub fn cost_under(&self, cost: &Matrix<f64>) -> f64 {
        self.entries.iter().map(|&(i, j, w)| w * cost[(i, j)]).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EntropicConfig {
    pub epsilon: f64,
    pub max_iters: usize,
    /// Stop when the L1 marginal violation drops below this.
    pub tol: f64,
}

impl EntropicConfig {
    pub fn new(epsilon: f64) -> Self {
        Self { epsilon, max_iters: 200_000, tol: 1e-10 }
    }
}

fn check_pair(source: &GridMeasure, target: &GridMeasure) -> Result<(), TransportError> {
    if source.dim() != target.dim() {
        return Err(TransportError::DimensionMismatch { source_dim: source.dim(), target_dim: target.dim() });
    }
    Ok(())
}

fn check_weights(a: &[f64], b: &[f64]) -> Result<(), TransportError> {
    let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    if (sa - sb).abs() > 1e-9 || a.iter().chain(b).any(|w| !(*w >= 0.0)) {
        return Err(TransportError::UnbalancedMass(sa, sb));
    }
    Ok(())
}

/// `C_h(x_i, y_j)` for all source atoms `x_i` and target atoms `y_j`.
pub fn cost_matrix(
    ev: &CostEvaluator<f64>,
    h: f64,
    source: &GridMeasure,
    target: &GridMeasure,
) -> Result<Matrix<f64>, TransportError> {
    if !(h > 0.0) {
        return Err(TransportError::NonPositiveStep(h));
    }
    check_pair(source, target)?;
    if source.dim() != ev.state_len() {
        return Err(crate::KernelError::DimensionMismatch { expected: ev.state_len(), got: source.dim() }.into());
    }
    let at = &ev.at(h)?;
    let cols = target.len();
    let dim = ev.state_len();
    let data: Vec<f64> = (0..source.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut buf = vec![0.0; dim];
            let x = source.point(i);
            (0..cols).map(move |j| at.cost_with(x, target.point(j), &mut buf)).collect::<Vec<_>>()
        })
        .collect();
    if data.iter().any(|c| !c.is_finite()) {
        return Err(crate::KernelError::NonFinite.into());
    }
    Ok(Matrix::from_fn(source.len(), cols, |i, j| data[i * cols + j]))
}

/// Squared Euclidean distances between atoms.
pub fn squared_distance_matrix(source: &GridMeasure, target: &GridMeasure) -> Matrix<f64> {
    Matrix::from_fn(source.len(), target.len(), |i, j| {
        source.point(i).iter().zip(target.point(j)).map(|(x, y)| (x - y) * (x - y)).sum()
    })
}

/// Median entry of a cost matrix.
pub fn median_cost(cost: &Matrix<f64>) -> f64 {
    let mut v = cost.as_slice().to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return 0.0;
    }
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}

/// Optimal plan of the linear program with an arbitrary cost matrix.
pub fn solve_exact_with_cost(cost: &Matrix<f64>, a: &[f64], b: &[f64]) -> Result<TransportPlan, TransportError> {
    let entries = a.len() * b.len();
    if entries > EXACT_LIMIT {
        return Err(TransportError::TooLarge { entries, limit: EXACT_LIMIT });
    }
    check_weights(a, b)?;
    let sol = exact::transportation_simplex(cost, a, b);
    Ok(TransportPlan { rows: a.len(), cols: b.len(), entries: sol.flows, cost_value: sol.value, method: Method::Exact })
}

/// Exact `W_h(source, target)` and an optimal plan.
pub fn solve_exact(
    ev: &CostEvaluator<f64>,
    h: f64,
    source: &GridMeasure,
    target: &GridMeasure,
) -> Result<TransportPlan, TransportError> {
    let entries = source.len() * target.len();
    if entries > EXACT_LIMIT {
        return Err(TransportError::TooLarge { entries, limit: EXACT_LIMIT });
    }
    let cost = cost_matrix(ev, h, source, target)?;
    solve_exact_with_cost(&cost, source.weights(), target.weights())
}

/// Entropic plan for an arbitrary cost matrix. On non-convergence the error
/// carries the last plan and its violation.
pub fn solve_entropic_with_cost(
    cost: &Matrix<f64>,
    a: &[f64],
    b: &[f64],
    cfg: &EntropicConfig,
) -> Result<TransportPlan, TransportError> {
    if !(cfg.epsilon > 0.0) {
        return Err(TransportError::NonPositiveEpsilon(cfg.epsilon));
    }
    check_weights(a, b)?;
    let run = entropic::sinkhorn(cost, a, b, cfg.epsilon, cfg.max_iters, cfg.tol);
    let cols = b.len();
    let entries: Vec<(usize, usize, f64)> =
        run.plan.iter().enumerate().filter(|(_, w)| **w > 0.0).map(|(k, &w)| (k / cols, k % cols, w)).collect();
    let cost_value = entries.iter().map(|&(i, j, w)| w * cost[(i, j)]).sum();
    let plan =
        TransportPlan { rows: a.len(), cols, entries, cost_value, method: Method::Entropic { epsilon: cfg.epsilon } };
    if run.converged {
        Ok(plan)
    } else {
        Err(TransportError::NotConverged { iterations: run.iterations, violation: run.violation, plan: Box::new(plan) })
    }
}

/// Entropic approximation of `W_h(source, target)`.
pub fn solve_entropic(
    ev: &CostEvaluator<f64>,
    h: f64,
    source: &GridMeasure,
    target: &GridMeasure,
    cfg: &EntropicConfig,
) -> Result<TransportPlan, TransportError> {
    let cost = cost_matrix(ev, h, source, target)?;
    solve_entropic_with_cost(&cost, source.weights(), target.weights(), cfg)
}

/// Squared Euclidean Wasserstein distance. One-dimensional measures use the
/// monotone (quantile) coupling; otherwise the exact LP.
pub fn wasserstein2_euclidean(source: &GridMeasure, target: &GridMeasure) -> Result<f64, TransportError> {
    check_pair(source, target)?;
    if source.dim() == 1 {
        return Ok(monotone_cost_1d(source, target));
    }
    let cost = squared_distance_matrix(source, target);
    Ok(solve_exact_with_cost(&cost, source.weights(), target.weights())?.cost_value)
}

fn sorted_atoms(m: &GridMeasure) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = (0..m.len()).map(|i| (m.point(i)[0], m.weights()[i])).collect();
    v.sort_by(|x, y| x.0.total_cmp(&y.0));
    v
}

fn monotone_cost_1d(source: &GridMeasure, target: &GridMeasure) -> f64 {
    let (xs, ys) = (sorted_atoms(source), sorted_atoms(target));
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (xs[0].1, ys[0].1);
    let mut total = 0.0;
    while i < xs.len() && j < ys.len() {
        let m = ra.min(rb);
        total += m * (xs[i].0 - ys[j].0).powi(2);
        ra -= m;
        rb -= m;
        if ra <= rb {
            i += 1;
            if i < xs.len() {
                ra = xs[i].1;
            }
        } else {
            j += 1;
            if j < ys.len() {
                rb = ys[j].1;
            }
        }
    }
    total
}
