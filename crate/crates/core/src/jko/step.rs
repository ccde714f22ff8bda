//! One minimizing-movement step.
//!
//! The step solves the entropically regularized problem
//!
//! ```text
//! min_pi  <C, pi> + eps sum pi (log pi - 1) + tau sum_j q_j (log q_j - l_j)
//! s.t.    pi 1 = a,   q = pi^T 1
//! ```
//!
//! with `tau = 2h` and `l_j = log vol - V_j`. Dividing by `tau` recovers
//! `W/(2h) + F(q)`. The free target marginal enters through a KL proximal
//! term, which gives the closed-form column update
//! `g = (eps tau / (eps + tau)) (l - 1 - log S)`; the row update is the usual
//! Sinkhorn one. All updates run in the log domain on a sparse kernel that
//! keeps, in each row, the entries within `truncation * eps` of the row
//! minimum. Entries outside the pattern are checked densely after
//! convergence and the pattern is widened if they carry mass.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost_kernel::CostEvaluator;
use crate::error::SchemeError;
use crate::grid::GridMeasure;
use crate::matrix::Matrix;
use crate::optimal_transport::{cost_matrix, Method, TransportPlan};

use super::potential::PotentialSpec;

/// Solver settings for a step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JkoConfig {
    /// `eps = kappa h^2` unless `epsilon` is set.
    pub kappa: f64,
    pub epsilon: Option<f64>,
    pub max_iters: usize,
    /// Stop when the L1 source-marginal violation is below this.
    pub marginal_tol: f64,
    /// Kernel pattern width in units of `eps`.
    pub truncation: f64,
    /// Largest admissible plan mass outside the pattern.
    pub dropped_mass_tol: f64,
}

impl Default for JkoConfig {
    fn default() -> Self {
        Self {
            kappa: 4.0,
            epsilon: None,
            max_iters: 200_000,
            marginal_tol: 1e-11,
            truncation: 60.0,
            dropped_mass_tol: 1e-12,
        }
    }
}

impl JkoConfig {
    pub fn epsilon_for(&self, h: f64) -> f64 {
        self.epsilon.unwrap_or(self.kappa * h * h)
    }
}

/// Row-compressed pattern with its transpose.
#[derive(Clone, Debug)]
struct Pattern {
    row_start: Vec<usize>,
    row_col: Vec<usize>,
    row_cost: Vec<f64>,
    col_start: Vec<usize>,
    col_row: Vec<usize>,
    col_cost: Vec<f64>,
}

impl Pattern {
    fn build(cost: &Matrix<f64>, width: f64) -> Self {
        let (m, n) = (cost.rows(), cost.cols());
        let per_row: Vec<Vec<(usize, f64)>> = (0..m)
            .into_par_iter()
            .map(|i| {
                let row = cost.row(i);
                let min = row.iter().copied().fold(f64::INFINITY, f64::min);
                row.iter().enumerate().filter(|(_, c)| **c <= min + width).map(|(j, c)| (j, *c)).collect()
            })
            .collect();
        let mut row_start = Vec::with_capacity(m + 1);
        let mut row_col = Vec::new();
        let mut row_cost = Vec::new();
        let mut col_count = vec![0usize; n];
        row_start.push(0);
        for entries in &per_row {
            for &(j, c) in entries {
                row_col.push(j);
                row_cost.push(c);
                col_count[j] += 1;
            }
            row_start.push(row_col.len());
        }
        let mut col_start = vec![0usize; n + 1];
        for j in 0..n {
            col_start[j + 1] = col_start[j] + col_count[j];
        }
        let mut fill = col_start.clone();
        let mut col_row = vec![0usize; row_col.len()];
        let mut col_cost = vec![0.0; row_col.len()];
        for i in 0..m {
            for k in row_start[i]..row_start[i + 1] {
                let j = row_col[k];
                col_row[fill[j]] = i;
                col_cost[fill[j]] = row_cost[k];
                fill[j] += 1;
            }
        }
        Self { row_start, row_col, row_cost, col_start, col_row, col_cost }
    }

    fn nnz(&self) -> usize {
        self.row_col.len()
    }
}

fn lse(vals: impl Iterator<Item = f64>) -> f64 {
    let mut max = f64::NEG_INFINITY;
    let buf: Vec<f64> = vals.inspect(|v| max = max.max(*v)).collect();
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + buf.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Cost matrix and kernel pattern for a fixed grid, step and potential.
#[derive(Clone, Debug)]
pub struct StepOperator {
    h: f64,
    eps: f64,
    tau: f64,
    cost: Matrix<f64>,
    log_target: Vec<f64>,
    pattern: Pattern,
    truncation: f64,
    cfg: JkoConfig,
}

/// Outcome of one step.
#[derive(Clone, Debug)]
pub struct StepResult {
    pub rho_next: GridMeasure,
    pub plan: TransportPlan,
    /// `(primal - dual) / |primal|` of the regularized problem.
    pub relative_gap: f64,
    /// Regularized objective divided by `2h`.
    pub objective: f64,
    pub iterations: usize,
    pub marginal_violation: f64,
    /// Plan mass outside the final pattern.
    pub dropped_mass: f64,
    /// Target-side dual potential, reusable as a warm start.
    pub dual: Vec<f64>,
}

impl StepOperator {
    /// `template` fixes the grid points; its weights are ignored.
    pub fn new(
        ev: &CostEvaluator<f64>,
        template: &GridMeasure,
        h: f64,
        potential: &PotentialSpec,
        cfg: &JkoConfig,
    ) -> Result<Self, SchemeError> {
        if !(h > 0.0) {
            return Err(SchemeError::BadStep(h));
        }
        let eps = cfg.epsilon_for(h);
        if !(eps > 0.0) {
            return Err(crate::TransportError::NonPositiveEpsilon(eps).into());
        }
        let vol = template.cell_volume().ok_or(crate::MeasureError::ZeroVolume(0.0))?;
        let cost = cost_matrix(ev, h, template, template)?;
        let d = ev.dim();
        let log_target = (0..template.len()).map(|j| vol.ln() - potential.value(template.point(j), d)).collect();
        let pattern = Pattern::build(&cost, cfg.truncation * eps);
        Ok(Self { h, eps, tau: 2.0 * h, cost, log_target, pattern, truncation: cfg.truncation, cfg: cfg.clone() })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn epsilon(&self) -> f64 {
        self.eps
    }

    pub fn cost(&self) -> &Matrix<f64> {
        &self.cost
    }

    pub fn pattern_nnz(&self) -> usize {
        self.pattern.nnz()
    }

    /// Run one step from `rho_prev`, optionally warm-started from a previous dual.
    pub fn step(&mut self, rho_prev: &GridMeasure, warm: Option<&[f64]>) -> Result<StepResult, SchemeError> {
        let n = self.cost.cols();
        if rho_prev.len() != self.cost.rows() {
            return Err(
                crate::MeasureError::LengthMismatch { points: self.cost.rows(), weights: rho_prev.len() }.into()
            );
        }
        let mut g = match warm {
            Some(w) if w.len() == n => w.to_vec(),
            _ => vec![0.0; n],
        };
        let mut total_iters = 0;
        loop {
            let solved = self.solve(rho_prev.weights(), &mut g)?;
            total_iters += solved.iterations;
            let dropped = self.dropped_mass(&solved.f, &g);
            if dropped <= self.cfg.dropped_mass_tol || self.truncation > 1e6 {
                return self.finish(rho_prev, solved, g, total_iters, dropped);
            }
            self.truncation *= 2.0;
            self.pattern = Pattern::build(&self.cost, self.truncation * self.eps);
        }
    }

    fn solve(&self, a: &[f64], g: &mut [f64]) -> Result<Solved, SchemeError> {
        let (eps, tau) = (self.eps, self.tau);
        let kap = eps * tau / (eps + tau);
        let p = &self.pattern;
        let log_a: Vec<f64> = a.iter().map(|w| w.ln()).collect();
        let cols = g.len();
        let row_update = |g: &[f64]| -> Vec<f64> {
            (0..a.len())
                .into_par_iter()
                .map(|i| {
                    if a[i] <= 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    let r = p.row_start[i]..p.row_start[i + 1];
                    let s = lse(r.map(|k| (g[p.row_col[k]] - p.row_cost[k]) / eps));
                    eps * log_a[i] - eps * s
                })
                .collect()
        };
        let col_lse = |f: &[f64]| -> Vec<f64> {
            (0..cols)
                .into_par_iter()
                .map(|j| {
                    let r = p.col_start[j]..p.col_start[j + 1];
                    lse(r.map(|k| (f[p.col_row[k]] - p.col_cost[k]) / eps))
                })
                .collect()
        };

        let mut f = row_update(g);
        let mut log_s = col_lse(&f);
        let mut iterations = 0;
        let mut violation = f64::INFINITY;
        while iterations < self.cfg.max_iters {
            iterations += 1;
            for (j, gj) in g.iter_mut().enumerate() {
                *gj = if log_s[j].is_finite() { kap * (self.log_target[j] - 1.0 - log_s[j]) } else { 0.0 };
            }
            let f_next = row_update(g);
            // Row sums of the current plan are a_i exp((f_i - f_next_i)/eps).
            violation = a
                .iter()
                .zip(f.iter().zip(&f_next))
                .filter(|(w, _)| **w > 0.0)
                .map(|(w, (fi, fn_))| w * (((fi - fn_) / eps).exp() - 1.0).abs())
                .sum();
            if violation < self.cfg.marginal_tol {
                break;
            }
            f = f_next;
            log_s = col_lse(&f);
        }
        if !(violation < self.cfg.marginal_tol) {
            return Err(SchemeError::NotConverged(format!(
                "marginal violation {violation:e} after {iterations} iterations"
            )));
        }
        Ok(Solved { f, log_s, iterations, violation })
    }

    fn dropped_mass(&self, f: &[f64], g: &[f64]) -> f64 {
        let eps = self.eps;
        let p = &self.pattern;
        (0..f.len())
            .into_par_iter()
            .map(|i| {
                if f[i] == f64::NEG_INFINITY {
                    return 0.0;
                }
                let kept = &p.row_col[p.row_start[i]..p.row_start[i + 1]];
                let row = self.cost.row(i);
                let mut mass = 0.0;
                let mut k = 0;
                for (j, c) in row.iter().enumerate() {
                    if k < kept.len() && kept[k] == j {
                        k += 1;
                        continue;
                    }
                    mass += ((f[i] + g[j] - c) / eps).exp();
                }
                mass
            })
            .sum()
    }

    fn finish(
        &self,
        rho_prev: &GridMeasure,
        solved: Solved,
        g: Vec<f64>,
        iterations: usize,
        dropped_mass: f64,
    ) -> Result<StepResult, SchemeError> {
        let (eps, tau) = (self.eps, self.tau);
        let p = &self.pattern;
        let f = &solved.f;
        let a = rho_prev.weights();
        let q: Vec<f64> = (0..g.len())
            .map(|j| if solved.log_s[j].is_finite() { (g[j] / eps + solved.log_s[j]).exp() } else { 0.0 })
            .collect();

        let mut entries = Vec::with_capacity(p.nnz());
        let (mut transport, mut ent, mut mass) = (0.0, 0.0, 0.0);
        for (i, &fi) in f.iter().enumerate().take(a.len()) {
            if fi == f64::NEG_INFINITY {
                continue;
            }
            for k in p.row_start[i]..p.row_start[i + 1] {
                let j = p.row_col[k];
                let log_pi = (fi + g[j] - p.row_cost[k]) / eps;
                let pi = log_pi.exp();
                if pi > 0.0 {
                    entries.push((i, j, pi));
                    transport += pi * p.row_cost[k];
                    ent += pi * (log_pi - 1.0);
                    mass += pi;
                }
            }
        }
        let marginal: f64 =
            q.iter().zip(&self.log_target).filter(|(qj, _)| **qj > 0.0).map(|(qj, l)| qj * (qj.ln() - l)).sum();
        let primal = transport + eps * ent + tau * marginal;
        let dual_rows: f64 = a.iter().zip(f).filter(|(w, _)| **w > 0.0).map(|(w, fi)| w * fi).sum();
        let dual_cols: f64 = g
            .iter()
            .zip(&self.log_target)
            .zip(&solved.log_s)
            .filter(|(_, s)| s.is_finite())
            .map(|((gj, l), _)| (-gj / tau + l - 1.0).exp())
            .sum();
        let dual = dual_rows - eps * mass - tau * dual_cols;
        let relative_gap = (primal - dual) / primal.abs().max(f64::MIN_POSITIVE);

        let total: f64 = q.iter().sum();
        let weights: Vec<f64> = q.iter().map(|v| v / total).collect();
        let rho_next = rho_prev.with_weights(weights)?;
        let plan = TransportPlan {
            rows: a.len(),
            cols: g.len(),
            entries,
            cost_value: transport,
            method: Method::Entropic { epsilon: eps },
        };
        Ok(StepResult {
            rho_next,
            plan,
            relative_gap,
            objective: primal / tau,
            iterations,
            marginal_violation: solved.violation,
            dropped_mass,
            dual: g,
        })
    }
}

struct Solved {
    f: Vec<f64>,
    log_s: Vec<f64>,
    iterations: usize,
    violation: f64,
}

/// Single step with a freshly built operator.
pub fn jko_step(
    ev: &CostEvaluator<f64>,
    rho_prev: &GridMeasure,
    h: f64,
    potential: &PotentialSpec,
    cfg: &JkoConfig,
) -> Result<StepResult, SchemeError> {
    StepOperator::new(ev, rho_prev, h, potential, cfg)?.step(rho_prev, None)
}
