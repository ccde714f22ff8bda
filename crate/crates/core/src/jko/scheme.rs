use serde::Serialize;

use crate::cost_kernel::CostEvaluator;
use crate::error::SchemeError;
use crate::grid::{GridMeasure, TensorGrid};
use crate::optimal_transport::{wasserstein2_euclidean, TransportPlan, EXACT_LIMIT};

use super::potential::{free_energy, FreeEnergy, PotentialSpec};
use super::step::{JkoConfig, StepOperator};

/// Monitors more than this factor above their running median abort the run.
const BLOWUP_FACTOR: f64 = 10.0;
/// Floor for the running median, so monitors that start near zero are not flagged.
const BLOWUP_FLOOR: f64 = 1.0;

/// Order, block dimension, grid and potential of a scheme run.
#[derive(Clone, Debug, Serialize)]
pub struct Problem {
    pub n: usize,
    pub d: usize,
    pub grid: TensorGrid,
    pub potential: PotentialSpec,
}

impl Problem {
    pub fn new(n: usize, d: usize, grid: TensorGrid, potential: PotentialSpec) -> Result<Self, SchemeError> {
        if grid.dim() != n * d {
            return Err(crate::KernelError::DimensionMismatch { expected: n * d, got: grid.dim() }.into());
        }
        potential.validate(&grid, d)?;
        Ok(Self { n, d, grid, potential })
    }

    pub fn initial_density(&self, density: impl Fn(&[f64]) -> f64) -> Result<GridMeasure, SchemeError> {
        Ok(GridMeasure::from_density(&self.grid, density)?)
    }
}

/// How the transport cost in the energy monitor was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportCostSource {
    /// Exact one-dimensional monotone coupling (`n = d = 1`, where the cost is `|x - y|^2`).
    Monotone,
    /// Cost of the step's entropic plan, an upper bound on the exact value.
    PlanUpperBound,
}

#[derive(Clone, Debug, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub free_energy: FreeEnergy,
    /// Transport cost between consecutive iterates used by the energy monitor.
    pub transport_cost: f64,
    pub transport_cost_source: TransportCostSource,
    /// `<C, plan>` of the step's entropic plan.
    pub plan_cost: f64,
    pub second_moment: f64,
    /// Mass within one cell of the boundary.
    pub boundary_mass: f64,
    /// `F_k + W/(2h) - F_{k-1}`.
    pub energy_gap: f64,
    /// `sum rho_{k-1}(x) C_h(x, x)`, the cost of staying put.
    pub stay_put_cost: f64,
    /// `energy_gap - stay_put_cost/(2h)`.
    pub corrected_energy_gap: f64,
    pub optimizer_gap: f64,
    pub iterations: usize,
    pub dropped_mass: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SchemeState {
    pub problem: Problem,
    pub h: f64,
    pub t_end: f64,
    pub epsilon: f64,
    pub initial_energy: FreeEnergy,
    #[serde(skip)]
    pub densities: Vec<GridMeasure>,
    #[serde(skip)]
    pub plans: Vec<TransportPlan>,
    pub records: Vec<StepRecord>,
}

impl SchemeState {
    pub fn steps(&self) -> usize {
        self.records.len()
    }

    /// `sum_k W(rho_{k-1}, rho_k)`.
    pub fn transport_sum(&self) -> f64 {
        self.records.iter().map(|r| r.transport_cost).sum()
    }

    pub fn max_energy_gap(&self) -> f64 {
        self.records.iter().map(|r| r.energy_gap).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_corrected_energy_gap(&self) -> f64 {
        self.records.iter().map(|r| r.corrected_energy_gap).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_optimizer_gap(&self) -> f64 {
        self.records.iter().map(|r| r.optimizer_gap.abs()).fold(0.0, f64::max)
    }

    pub fn max_second_moment(&self) -> f64 {
        self.records.iter().map(|r| r.second_moment).fold(0.0, f64::max)
    }

    pub fn final_density(&self) -> &GridMeasure {
        self.densities.last().expect("scheme state holds rho_0")
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}

fn guard(name: &str, history: &[f64], value: f64) -> Result<(), SchemeError> {
    if history.len() < 3 {
        return Ok(());
    }
    let med = median(history);
    if !value.is_finite() || value > BLOWUP_FACTOR * med.max(BLOWUP_FLOOR) {
        return Err(SchemeError::Blowup { name: name.to_string(), value, median: med });
    }
    Ok(())
}

/// Number of steps for final time `t_end`: `ceil(t_end / h)`, at least one.
pub fn step_count(h: f64, t_end: f64) -> usize {
    let r = t_end / h;
    let k = if (r - r.round()).abs() < 1e-9 { r.round() } else { r.ceil() };
    (k as usize).max(1)
}

/// Iterate the scheme from `rho0` up to `t_end`.
pub fn run_scheme(
    problem: &Problem,
    rho0: &GridMeasure,
    h: f64,
    t_end: f64,
    cfg: &JkoConfig,
) -> Result<SchemeState, SchemeError> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(SchemeError::BadStep(h));
    }
    let (n, d) = (problem.n, problem.d);
    let ev = CostEvaluator::<f64>::new(n, d)?;
    let initial_energy = free_energy(rho0, &problem.potential, d)?;
    if !initial_energy.total.is_finite() {
        return Err(SchemeError::InfiniteEnergy);
    }
    let mut op = StepOperator::new(&ev, rho0, h, &problem.potential, cfg)?;
    let diag: Vec<f64> = (0..rho0.len()).map(|i| op.cost()[(i, i)]).collect();
    let exact_1d = n == 1 && d == 1;
    let steps = step_count(h, t_end);

    let mut densities = vec![rho0.clone()];
    let mut plans = Vec::with_capacity(steps);
    let mut records: Vec<StepRecord> = Vec::with_capacity(steps);
    let mut warm: Option<Vec<f64>> = None;
    let mut prev_energy = initial_energy;
    for k in 1..=steps {
        let wrap = |e: SchemeError| SchemeError::Step { step: k, source: Box::new(e) };
        let prev = densities.last().expect("non-empty");
        let res = op.step(prev, warm.as_deref()).map_err(wrap)?;
        let energy = free_energy(&res.rho_next, &problem.potential, d).map_err(|e| wrap(e.into()))?;
        let (transport_cost, transport_cost_source) = if exact_1d {
            let w = wasserstein2_euclidean(prev, &res.rho_next).map_err(|e| wrap(e.into()))?;
            (w, TransportCostSource::Monotone)
        } else {
            (res.plan.cost_value, TransportCostSource::PlanUpperBound)
        };
        let stay_put_cost: f64 = prev.weights().iter().zip(&diag).map(|(w, c)| w * c).sum();
        let energy_gap = energy.total + transport_cost / (2.0 * h) - prev_energy.total;
        let record = StepRecord {
            step: k,
            time: k as f64 * h,
            free_energy: energy,
            transport_cost,
            transport_cost_source,
            plan_cost: res.plan.cost_value,
            second_moment: res.rho_next.second_moment(),
            boundary_mass: res.rho_next.boundary_mass(&problem.grid, 1.0),
            energy_gap,
            stay_put_cost,
            corrected_energy_gap: energy_gap - stay_put_cost / (2.0 * h),
            optimizer_gap: res.relative_gap,
            iterations: res.iterations,
            dropped_mass: res.dropped_mass,
        };
        let m2: Vec<f64> = records.iter().map(|r| r.second_moment).collect();
        guard("second_moment", &m2, record.second_moment).map_err(wrap)?;
        let ent: Vec<f64> = records.iter().map(|r| r.free_energy.positive_entropy).collect();
        guard("positive_entropy", &ent, record.free_energy.positive_entropy).map_err(wrap)?;

        prev_energy = energy;
        warm = Some(res.dual);
        densities.push(res.rho_next);
        plans.push(res.plan);
        records.push(record);
    }
    Ok(SchemeState {
        problem: problem.clone(),
        h,
        t_end,
        epsilon: op.epsilon(),
        initial_energy,
        densities,
        plans,
        records,
    })
}

/// Piecewise-constant interpolation: `rho_k` on `((k-1)h, kh]`, `rho_0` at `t = 0`.
pub fn interpolate(state: &SchemeState, t: f64) -> Result<&GridMeasure, SchemeError> {
    let horizon = state.steps() as f64 * state.h;
    if !(t >= 0.0) || t > horizon * (1.0 + 1e-12) {
        return Err(SchemeError::TimeOutOfRange { t, t_end: horizon });
    }
    if t == 0.0 {
        return Ok(&state.densities[0]);
    }
    let k = step_count(state.h, t).min(state.steps());
    Ok(&state.densities[k])
}

#[derive(Clone, Debug, Serialize)]
pub struct EquicontinuityRow {
    pub t1: f64,
    pub t2: f64,
    pub w2_squared: f64,
    /// `W_2^2 / (|t2 - t1| + h)`, zero when `t1 = t2`.
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EquicontinuityTable {
    pub rows: Vec<EquicontinuityRow>,
    pub max_ratio: f64,
    pub median_ratio: f64,
    /// `max_ratio / median_ratio < 20`.
    pub bounded: bool,
    /// Side length, in cells, of the blocks pooled before the exact solve (1 = none).
    pub pooling_block: usize,
}

/// Largest number of sampled times in the monitor.
const MAX_SAMPLES: usize = 12;

/// Squared W2 between two interpolants, pooling cells when the exact LP would be too large.
pub fn equicontinuity_pair(state: &SchemeState, t1: f64, t2: f64) -> Result<EquicontinuityRow, SchemeError> {
    let a = interpolate(state, t1)?;
    let b = interpolate(state, t2)?;
    let w2_squared = if t1 == t2 {
        0.0
    } else {
        let block = pooling_block(&state.problem.grid);
        pooled_w2(&state.problem.grid, a, b, block)?
    };
    let ratio = if t1 == t2 { 0.0 } else { w2_squared / ((t2 - t1).abs() + state.h) };
    Ok(EquicontinuityRow { t1, t2, w2_squared, ratio })
}

/// `W_2^2(rho^h(t1), rho^h(t2)) / (|t2 - t1| + h)` over pairs of sampled times.
pub fn equicontinuity_monitor(state: &SchemeState) -> Result<EquicontinuityTable, SchemeError> {
    let k = state.steps();
    let mut idx: Vec<usize> = (0..MAX_SAMPLES.min(k + 1))
        .map(|s| if k < MAX_SAMPLES { s } else { (s as f64 * k as f64 / (MAX_SAMPLES - 1) as f64).round() as usize })
        .collect();
    idx.dedup();
    let mut rows = Vec::new();
    for (p, &i) in idx.iter().enumerate() {
        for &j in &idx[p + 1..] {
            rows.push(equicontinuity_pair(state, i as f64 * state.h, j as f64 * state.h)?);
        }
    }
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let median_ratio = if ratios.is_empty() { 0.0 } else { median(&ratios) };
    let bounded = max_ratio.is_finite() && (max_ratio == 0.0 || max_ratio < 20.0 * median_ratio);
    Ok(EquicontinuityTable {
        rows,
        max_ratio,
        median_ratio,
        bounded,
        pooling_block: pooling_block(&state.problem.grid),
    })
}

fn pooling_block(grid: &TensorGrid) -> usize {
    if grid.dim() == 1 {
        return 1;
    }
    (1..)
        .find(|&b| {
            let atoms: usize = grid.axes.iter().map(|a| a.cells.div_ceil(b)).product();
            atoms * atoms <= EXACT_LIMIT
        })
        .expect("some block size fits")
}

/// Collapse each `block^dim` group of cells to its barycentre.
fn pool(grid: &TensorGrid, m: &GridMeasure, block: usize) -> Result<GridMeasure, SchemeError> {
    if block == 1 {
        return Ok(m.clone());
    }
    let counts: Vec<usize> = grid.axes.iter().map(|a| a.cells.div_ceil(block)).collect();
    let atoms: usize = counts.iter().product();
    let dim = grid.dim();
    let mut mass = vec![0.0; atoms];
    let mut moment = vec![0.0; atoms * dim];
    for i in 0..m.len() {
        let idx = grid.unravel(i);
        let b = idx.iter().zip(&counts).fold(0, |acc, (&k, &c)| acc * c + k / block);
        let w = m.weights()[i];
        mass[b] += w;
        for (slot, x) in moment[b * dim..(b + 1) * dim].iter_mut().zip(m.point(i)) {
            *slot += w * x;
        }
    }
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for b in 0..atoms {
        if mass[b] > 0.0 {
            points.extend(moment[b * dim..(b + 1) * dim].iter().map(|s| s / mass[b]));
            weights.push(mass[b]);
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(GridMeasure::new(dim, points, weights)?)
}

fn pooled_w2(grid: &TensorGrid, a: &GridMeasure, b: &GridMeasure, block: usize) -> Result<f64, SchemeError> {
    let pa = pool(grid, a, block)?;
    let pb = pool(grid, b, block)?;
    Ok(wasserstein2_euclidean(&pa, &pb)?)
}
