use serde::{Deserialize, Serialize};

use crate::error::SchemeError;
use crate::fundamental_solution::Kernel;
use crate::grid::{GridMeasure, TensorGrid};
use crate::optimal_transport::TransportPlan;

use super::potential::{PotentialKind, PotentialSpec};
use super::scheme::{interpolate, run_scheme, Problem, SchemeState};
use super::step::JkoConfig;

/// Smooth test function for the Euler-Lagrange residual.
pub trait TestFunction: Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn grad(&self, x: &[f64]) -> Vec<f64>;
    /// Laplacian restricted to coordinates `range`.
    fn partial_laplacian(&self, x: &[f64], range: std::ops::Range<usize>) -> f64;
    /// Whether the support stays at least one cell away from the grid boundary.
    fn fits(&self, grid: &TensorGrid) -> bool;
}

/// Constant function; every residual term vanishes.
#[derive(Clone, Copy, Debug)]
pub struct Constant(pub f64);

impl TestFunction for Constant {
    fn value(&self, _: &[f64]) -> f64 {
        self.0
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        vec![0.0; x.len()]
    }

    fn partial_laplacian(&self, _: &[f64], _: std::ops::Range<usize>) -> f64 {
        0.0
    }

    fn fits(&self, _: &TensorGrid) -> bool {
        true
    }
}

/// `exp(-1 / (1 - r^2))` with `r = |x - center| / radius`, zero for `r >= 1`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Bump {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Bump {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        Self { center, radius }
    }

    /// `(s, phi, dphi/ds, d2phi/ds2)` with `s = r^2`, or `None` outside the support.
    fn profile(&self, x: &[f64]) -> Option<(f64, f64, f64, f64)> {
        let r2 = self.radius * self.radius;
        let s = x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>() / r2;
        if s >= 1.0 {
            return None;
        }
        let w = 1.0 / (1.0 - s);
        let phi = (-w).exp();
        let d1 = -w * w * phi;
        let d2 = phi * (w.powi(4) - 2.0 * w.powi(3));
        Some((s, phi, d1, d2))
    }
}

impl TestFunction for Bump {
    fn value(&self, x: &[f64]) -> f64 {
        self.profile(x).map_or(0.0, |p| p.1)
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let r2 = self.radius * self.radius;
        match self.profile(x) {
            None => vec![0.0; x.len()],
            Some((_, _, d1, _)) => x.iter().zip(&self.center).map(|(a, c)| d1 * 2.0 * (a - c) / r2).collect(),
        }
    }

    fn partial_laplacian(&self, x: &[f64], range: std::ops::Range<usize>) -> f64 {
        let r2 = self.radius * self.radius;
        match self.profile(x) {
            None => 0.0,
            Some((_, _, d1, d2)) => range
                .map(|k| {
                    let ds = 2.0 * (x[k] - self.center[k]) / r2;
                    d2 * ds * ds + d1 * 2.0 / r2
                })
                .sum(),
        }
    }

    fn fits(&self, grid: &TensorGrid) -> bool {
        grid.axes
            .iter()
            .zip(&self.center)
            .all(|(a, &c)| c - self.radius > a.lo + a.width() && c + self.radius < a.hi - a.width())
    }
}

/// The four terms of the discrete Euler-Lagrange relation and their sum.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ElResidual {
    /// `(1/h) sum plan_ij (y_j - x_i) . grad phi(y_j)`.
    pub transport: f64,
    /// `- sum rho(x) sum_{i>=2} x_i . grad_{x_{i-1}} phi(x)`.
    pub drift: f64,
    /// `sum rho(x) grad V(x_n) . grad_{x_n} phi(x)`.
    pub potential: f64,
    /// `- sum rho(x) Lap_{x_n} phi(x)`.
    pub diffusion: f64,
    pub total: f64,
}

/// Evaluate the Euler-Lagrange residual of one step by grid quadrature.
///
/// `plan` couples `rho_prev` (rows) to `rho_next` (columns).
pub fn euler_lagrange_residual(
    problem: &Problem,
    rho_prev: &GridMeasure,
    rho_next: &GridMeasure,
    plan: &TransportPlan,
    h: f64,
    phi: &dyn TestFunction,
) -> Result<ElResidual, SchemeError> {
    if !phi.fits(&problem.grid) {
        return Err(SchemeError::SupportTouchesBoundary);
    }
    if !(h > 0.0) {
        return Err(SchemeError::BadStep(h));
    }
    let (n, d) = (problem.n, problem.d);
    let grads: Vec<Vec<f64>> = (0..rho_next.len()).map(|j| phi.grad(rho_next.point(j))).collect();

    let mut transport = 0.0;
    for &(i, j, w) in &plan.entries {
        let (x, y) = (rho_prev.point(i), rho_next.point(j));
        let dot: f64 = y.iter().zip(x).zip(&grads[j]).map(|((yv, xv), gv)| (yv - xv) * gv).sum();
        transport += w * dot;
    }
    transport /= h;

    let (mut drift, mut potential, mut diffusion) = (0.0, 0.0, 0.0);
    for (k, &w) in rho_next.weights().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let x = rho_next.point(k);
        let g = &grads[k];
        for i in 1..n {
            for a in 0..d {
                drift -= w * x[i * d + a] * g[(i - 1) * d + a];
            }
        }
        let last = (n - 1) * d..n * d;
        let gv = problem.potential.grad_last(&x[last.clone()]);
        potential += w * gv.iter().zip(&g[last.clone()]).map(|(p, q)| p * q).sum::<f64>();
        diffusion -= w * phi.partial_laplacian(x, last);
    }
    Ok(ElResidual { transport, drift, potential, diffusion, total: transport + drift + potential + diffusion })
}

/// Residual of the last step of a finished run.
pub fn final_step_residual(state: &SchemeState, phi: &dyn TestFunction) -> Result<ElResidual, SchemeError> {
    let k = state.steps();
    euler_lagrange_residual(
        &state.problem,
        &state.densities[k - 1],
        &state.densities[k],
        &state.plans[k - 1],
        state.h,
        phi,
    )
}

/// Reference solution used by [`convergence_report`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reference {
    /// Superposition of the fundamental solution (zero potential, any order).
    Kernel,
    /// Analytic Gaussian marginal for `n = 1` and a quadratic potential,
    /// started from an isotropic Gaussian.
    OrnsteinUhlenbeck { mean: Vec<f64>, variance: f64 },
}

impl Reference {
    /// Pick the reference for `(n, V)`, refusing when none is known.
    pub fn select(
        n: usize,
        potential: &PotentialSpec,
        gaussian_start: Option<(Vec<f64>, f64)>,
    ) -> Result<Self, SchemeError> {
        let r = if potential.is_zero() {
            Reference::Kernel
        } else {
            match gaussian_start {
                Some((mean, variance)) => Reference::OrnsteinUhlenbeck { mean, variance },
                None => return Err(SchemeError::NoReference { n }),
            }
        };
        r.check(n, potential)?;
        Ok(r)
    }

    fn check(&self, n: usize, potential: &PotentialSpec) -> Result<(), SchemeError> {
        match self {
            Reference::Kernel if potential.is_zero() => Ok(()),
            Reference::OrnsteinUhlenbeck { .. } if n == 1 => match potential.kind {
                PotentialKind::Quadratic { stiffness } if stiffness > 0.0 => Ok(()),
                _ => Err(SchemeError::NoReference { n }),
            },
            _ => Err(SchemeError::NoReference { n }),
        }
    }

    /// Reference measure at time `t` on the cells of `rho0`.
    pub fn evaluate(&self, problem: &Problem, rho0: &GridMeasure, t: f64) -> Result<GridMeasure, SchemeError> {
        self.check(problem.n, &problem.potential)?;
        match self {
            Reference::Kernel => {
                let kernel = Kernel::<f64>::new(problem.n, problem.d)?;
                Ok(kernel.evolve_by_kernel(rho0, t)?.measure)
            }
            Reference::OrnsteinUhlenbeck { mean, variance } => {
                let k = match problem.potential.kind {
                    PotentialKind::Quadratic { stiffness } => stiffness,
                    _ => unreachable!("checked above"),
                };
                let decay = (-k * t).exp();
                let var = variance * decay * decay + (1.0 - decay * decay) / k;
                let center: Vec<f64> = mean.iter().map(|m| m * decay).collect();
                let weights: Vec<f64> = (0..rho0.len())
                    .map(|i| {
                        let r2: f64 = rho0.point(i).iter().zip(&center).map(|(x, c)| (x - c).powi(2)).sum();
                        (-r2 / (2.0 * var)).exp()
                    })
                    .collect();
                Ok(rho0.with_weights(crate::grid::normalize(weights)?)?)
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub steps: usize,
    pub epsilon: f64,
    pub l1_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub reference: Reference,
    pub t_end: f64,
    pub rows: Vec<ConvergenceRow>,
    /// `log(e_k / e_{k+1}) / log(h_k / h_{k+1})` for consecutive rows.
    pub empirical_orders: Vec<f64>,
    pub strictly_decreasing: bool,
    #[serde(skip)]
    pub states: Vec<SchemeState>,
}

/// Run the scheme for each `h` and measure the L1 distance to the reference at `t_end`.
pub fn convergence_report(
    problem: &Problem,
    rho0: &GridMeasure,
    t_end: f64,
    h_list: &[f64],
    reference: &Reference,
    cfg: &JkoConfig,
) -> Result<ConvergenceReport, SchemeError> {
    reference.check(problem.n, &problem.potential)?;
    let target = reference.evaluate(problem, rho0, t_end)?;
    let mut rows = Vec::with_capacity(h_list.len());
    let mut states = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let state = run_scheme(problem, rho0, h, t_end, cfg)?;
        let approx = interpolate(&state, t_end)?;
        rows.push(ConvergenceRow {
            h,
            steps: state.steps(),
            epsilon: state.epsilon,
            l1_error: approx.l1_distance(&target),
        });
        states.push(state);
    }
    let empirical_orders =
        rows.windows(2).map(|w| (w[0].l1_error / w[1].l1_error).ln() / (w[0].h / w[1].h).ln()).collect();
    let strictly_decreasing = rows.windows(2).all(|w| w[1].l1_error < w[0].l1_error);
    Ok(ConvergenceReport { reference: reference.clone(), t_end, rows, empirical_orders, strictly_decreasing, states })
}
