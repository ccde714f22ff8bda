//! Log-domain Sinkhorn with an epsilon-scaling schedule.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::matrix::Matrix;

/// Entries above which the row and column sweeps run in parallel.
const PARALLEL_ENTRIES: usize = 1 << 14;
/// Problems with at most this many dual variables get Newton polishing.
const NEWTON_MAX_VARS: usize = 400;
/// Sinkhorn sweeps at the target epsilon before switching to Newton.
const NEWTON_WARMUP: usize = 500;
const NEWTON_MAX_STEPS: usize = 200;
/// Sweep budget for each intermediate epsilon stage.
const STAGE_BUDGET: usize = 5_000;

pub(crate) struct SinkhornRun {
    /// Dense plan over the full `rows x cols` index set, row-major.
    pub plan: Vec<f64>,
    pub iterations: usize,
    pub violation: f64,
    pub converged: bool,
}

fn log_sum_exp(iter: impl Iterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = iter.collect();
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + vals.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn map_rows(count: usize, parallel: bool, f: impl Fn(usize) -> f64 + Sync + Send) -> Vec<f64> {
    if parallel {
        (0..count).into_par_iter().map(f).collect()
    } else {
        (0..count).map(f).collect()
    }
}

/// Solve the entropic problem at `eps_target`, starting from `10 * eps_target`
/// and halving. Convergence means the L1 row-marginal violation (columns are
/// exact after each sweep) is below `tol` at the target epsilon.
pub(crate) fn sinkhorn(
    cost: &Matrix<f64>,
    a: &[f64],
    b: &[f64],
    eps_target: f64,
    max_iters: usize,
    tol: f64,
) -> SinkhornRun {
    let rows: Vec<usize> = (0..a.len()).filter(|&i| a[i] > 0.0).collect();
    let cols: Vec<usize> = (0..b.len()).filter(|&j| b[j] > 0.0).collect();
    let log_a: Vec<f64> = rows.iter().map(|&i| a[i].ln()).collect();
    let log_b: Vec<f64> = cols.iter().map(|&j| b[j].ln()).collect();
    let c = |r: usize, s: usize| cost[(rows[r], cols[s])];
    let parallel = rows.len() * cols.len() >= PARALLEL_ENTRIES;

    let mut f = vec![0.0; rows.len()];
    let mut g = vec![0.0; cols.len()];
    let mut eps = 10.0 * eps_target;
    let mut iterations = 0usize;
    let mut violation = f64::INFINITY;

    let use_newton = rows.len() + cols.len() <= NEWTON_MAX_VARS;
    let converged = loop {
        let at_target = eps <= eps_target;
        let stage_tol = if at_target { tol } else { tol.max(1e-3) };
        let budget = if at_target {
            if use_newton {
                iterations + NEWTON_WARMUP
            } else {
                max_iters
            }
        } else {
            iterations + STAGE_BUDGET
        }
        .min(max_iters);
        let mut stage_done = false;
        while iterations < budget {
            iterations += 1;
            let f_next = map_rows(rows.len(), parallel, |r| {
                -eps * log_sum_exp((0..cols.len()).map(|s| log_b[s] + (g[s] - c(r, s)) / eps))
            });
            if iterations > 1 {
                // Row sums of the current plan are a_i exp((f_i - f_next_i)/eps).
                violation =
                    rows.iter().enumerate().map(|(r, &i)| a[i] * (((f[r] - f_next[r]) / eps).exp() - 1.0).abs()).sum();
                if violation < stage_tol {
                    stage_done = true;
                    break;
                }
            }
            f = f_next;
            g = map_rows(cols.len(), parallel, |s| {
                -eps * log_sum_exp((0..rows.len()).map(|r| log_a[r] + (f[r] - c(r, s)) / eps))
            });
        }
        if at_target {
            if !stage_done && use_newton {
                let dual = DualProblem { log_a: &log_a, log_b: &log_b, cost: &c, eps };
                violation = dual.newton(&mut f, &mut g, tol);
                stage_done = violation < tol;
            }
            break stage_done;
        }
        eps = (0.5 * eps).max(eps_target);
    };

    let mut plan = vec![0.0; a.len() * b.len()];
    for (r, &i) in rows.iter().enumerate() {
        for (s, &j) in cols.iter().enumerate() {
            plan[i * b.len() + j] = (log_a[r] + log_b[s] + (f[r] + g[s] - c(r, s)) / eps).exp();
        }
    }
    SinkhornRun { plan, iterations, violation, converged }
}

/// Dual of the entropic problem restricted to the support, for Newton polishing.
struct DualProblem<'a, C: Fn(usize, usize) -> f64> {
    log_a: &'a [f64],
    log_b: &'a [f64],
    cost: &'a C,
    eps: f64,
}

impl<C: Fn(usize, usize) -> f64> DualProblem<'_, C> {
    fn plan(&self, f: &[f64], g: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(f.len(), g.len(), |r, s| {
            (self.log_a[r] + self.log_b[s] + (f[r] + g[s] - (self.cost)(r, s)) / self.eps).exp()
        })
    }

    fn objective(&self, f: &[f64], g: &[f64], plan: &DMatrix<f64>) -> f64 {
        let lin: f64 = f.iter().zip(self.log_a).map(|(v, la)| v * la.exp()).sum::<f64>()
            + g.iter().zip(self.log_b).map(|(v, lb)| v * lb.exp()).sum::<f64>();
        lin - self.eps * plan.sum()
    }

    /// Gradient `(a - row sums, b - column sums)` and its L1 norm.
    fn residual(&self, plan: &DMatrix<f64>) -> (DVector<f64>, f64) {
        let (m, n) = plan.shape();
        let mut res = DVector::zeros(m + n);
        for r in 0..m {
            res[r] = self.log_a[r].exp() - plan.row(r).sum();
        }
        for s in 0..n {
            res[m + s] = self.log_b[s].exp() - plan.column(s).sum();
        }
        let norm = res.iter().map(|v| v.abs()).sum();
        (res, norm)
    }

    /// Damped Newton on the concave dual with the last column potential held
    /// fixed. Returns the final L1 marginal violation.
    fn newton(&self, f: &mut [f64], g: &mut [f64], tol: f64) -> f64 {
        let (m, n) = (f.len(), g.len());
        let vars = m + n - 1;
        let mut plan = self.plan(f, g);
        let (mut res, mut norm) = self.residual(&plan);
        for _ in 0..NEWTON_MAX_STEPS {
            if norm < tol {
                break;
            }
            let mut hess = DMatrix::<f64>::zeros(vars, vars);
            for r in 0..m {
                hess[(r, r)] = plan.row(r).sum();
                for s in 0..n - 1 {
                    hess[(r, m + s)] = plan[(r, s)];
                    hess[(m + s, r)] = plan[(r, s)];
                }
            }
            for s in 0..n - 1 {
                hess[(m + s, m + s)] = plan.column(s).sum();
            }
            let jitter = 1e-15 * hess.diagonal().max();
            for k in 0..vars {
                hess[(k, k)] += jitter;
            }
            let rhs = res.rows(0, vars).map(|v| v * self.eps);
            let step = match hess.clone().cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => match hess.lu().solve(&rhs) {
                    Some(x) => x,
                    None => break,
                },
            };
            // Armijo on the concave dual; the residual norm breaks ties once
            // objective differences drop below roundoff.
            let value = self.objective(f, g, &plan);
            let slope: f64 = (0..vars).map(|k| res[k] * step[k]).sum();
            let mut t = 1.0;
            let mut accepted = false;
            while t > 1e-12 {
                let f_try: Vec<f64> = (0..m).map(|r| f[r] + t * step[r]).collect();
                let g_try: Vec<f64> = (0..n).map(|s| if s + 1 < n { g[s] + t * step[m + s] } else { g[s] }).collect();
                let p_try = self.plan(&f_try, &g_try);
                let (r_try, n_try) = self.residual(&p_try);
                let v_try = self.objective(&f_try, &g_try, &p_try);
                let ascent = v_try >= value + 1e-4 * t * slope;
                let flat = (v_try - value).abs() <= 1e-14 * value.abs().max(1.0);
                if n_try.is_finite() && (ascent || (flat && n_try < norm)) {
                    f.copy_from_slice(&f_try);
                    g.copy_from_slice(&g_try);
                    plan = p_try;
                    res = r_try;
                    norm = n_try;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        norm
    }
}
