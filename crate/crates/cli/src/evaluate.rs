use std::path::Path;

use anyhow::Result;
use clap::Args;
use kolmogorov_jko::fundamental_solution::{DiracTable, Kernel};
use kolmogorov_jko::{CostEvaluatorF64, KernelError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::{output, usage, Verdict};

/// Relative tolerance of the cost PDE residual, scaled by `1 + C/t`.
const COST_PDE_TOL: f64 = 1e-8;
/// Gauss-Hermite nodes per axis and stretch for the normalization sweep.
const NORMALIZATION_NODES: usize = 16;
const NORMALIZATION_TOL: f64 = 1e-10;
/// Largest `n * d` for the tensor quadrature sweeps.
const MAX_NORMALIZATION_DIM: usize = 4;
const MAX_DIRAC_DIM: usize = 2;
const DIRAC_TOL: f64 = 1e-3;
const FD_STEP: f64 = 1e-4;

fn parse_vector(name: &str, text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            let v: f64 = s.trim().parse().map_err(|_| usage(format!("--{name}: cannot parse {s:?} as a number")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(usage(format!("--{name}: non-finite entry {s:?}")))
            }
        })
        .collect()
}

fn check_dims(n: usize, d: usize) -> Result<()> {
    if n == 0 || d == 0 {
        return Err(usage("--n and --d must be at least 1"));
    }
    Ok(())
}

fn check_len(name: &str, v: &[f64], len: usize) -> Result<()> {
    if v.len() != len {
        return Err(usage(format!("--{name} needs n*d = {len} entries, got {}", v.len())));
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct CostArgs {
    /// Order of the chain.
    #[arg(long)]
    n: usize,
    /// Dimension of each block.
    #[arg(long, default_value_t = 1)]
    d: usize,
    /// Time horizon.
    #[arg(long, allow_negative_numbers = true)]
    t: Option<f64>,
    /// Start state, comma separated, block-major (x1 block first).
    #[arg(long, allow_hyphen_values = true)]
    x: Option<String>,
    /// End state, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    y: Option<String>,
    /// Draw t, x and y from the seeded generator where not given.
    #[arg(long)]
    random: bool,
}

#[derive(Serialize)]
struct CostReport {
    n: usize,
    d: usize,
    t: f64,
    x: Vec<f64>,
    y: Vec<f64>,
    cost: f64,
    grad_x: Vec<f64>,
    grad_y: Vec<f64>,
    cost_dt: f64,
    pde_residual: f64,
    pde_tolerance: f64,
    within_tolerance: bool,
}

pub fn cost(args: &CostArgs, seed: u64, out_dir: Option<&Path>) -> Result<Verdict> {
    check_dims(args.n, args.d)?;
    let len = args.n * args.d;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = match args.t {
        Some(t) => t,
        None if args.random => rng.random_range(0.5..2.0),
        None => return Err(usage("--t is required unless --random is set")),
    };
    if !(t > 0.0) || !t.is_finite() {
        return Err(usage(format!("--t must be positive and finite, got {t}")));
    }
    let mut point = |name: &str, given: &Option<String>| -> Result<Vec<f64>> {
        match given {
            Some(text) => parse_vector(name, text),
            None if args.random => Ok((0..len).map(|_| rng.random_range(-1.0..1.0)).collect()),
            None => Err(usage(format!("--{name} is required unless --random is set"))),
        }
    };
    let x = point("x", &args.x)?;
    let y = point("y", &args.y)?;
    check_len("x", &x, len)?;
    check_len("y", &y, len)?;

    let ev = CostEvaluatorF64::new(args.n, args.d).map_err(|e| usage(e.to_string()))?;
    let at = ev.at(t)?;
    let cost = at.cost(&x, &y);
    let pde_residual = at.pde_residual(&x, &y);
    let pde_tolerance = COST_PDE_TOL * (1.0 + cost / t);
    let report = CostReport {
        n: args.n,
        d: args.d,
        t,
        grad_x: at.grad_x(&x, &y),
        grad_y: at.grad_y(&x, &y),
        cost_dt: at.dt(&x, &y),
        cost,
        pde_residual,
        pde_tolerance,
        within_tolerance: pde_residual.abs() <= pde_tolerance,
        x,
        y,
    };
    output::emit(&report, out_dir, "cost.json")?;
    Ok(Verdict::from_bool(report.within_tolerance))
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    d: usize,
    /// Time; must be positive.
    #[arg(long, allow_negative_numbers = true)]
    t: f64,
    /// Evaluation point, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    x: Option<String>,
    /// Base point; defaults to the origin.
    #[arg(long, allow_hyphen_values = true)]
    y: Option<String>,
    /// Integrate the kernel over x at t/4, t and 4t.
    #[arg(long)]
    normalize_check: bool,
    /// Integrate the kernel against a bump centred at y for t, t/3, ..., t/3^7.
    #[arg(long)]
    dirac_check: bool,
}

#[derive(Serialize)]
struct NormalizationRow {
    t: f64,
    mass: f64,
    error: f64,
}

#[derive(Serialize)]
struct NormalizationSweep {
    nodes_per_axis: usize,
    tolerance: f64,
    passed: bool,
    rows: Vec<NormalizationRow>,
}

#[derive(Serialize)]
struct DiracSweep {
    test_function: &'static str,
    bump_radius: f64,
    tolerance: f64,
    passed: bool,
    table: DiracTable,
}

#[derive(Serialize)]
struct KernelReport {
    n: usize,
    d: usize,
    t: f64,
    beta: f64,
    peak: f64,
    y: Vec<f64>,
    x: Option<Vec<f64>>,
    phi: Option<f64>,
    pde_residual: Option<f64>,
    normalization: Option<NormalizationSweep>,
    dirac: Option<DiracSweep>,
}

const BUMP_RADIUS: f64 = 2.0;

fn bump(center: &[f64], x: &[f64]) -> f64 {
    let s: f64 = x.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (BUMP_RADIUS * BUMP_RADIUS);
    if s < 1.0 {
        (-1.0 / (1.0 - s)).exp()
    } else {
        0.0
    }
}

pub fn kernel(args: &KernelArgs, out_dir: Option<&Path>) -> Result<Verdict> {
    check_dims(args.n, args.d)?;
    if !(args.t > 0.0) || !args.t.is_finite() {
        return Err(usage(format!("--t must be positive and finite, got {}", args.t)));
    }
    let len = args.n * args.d;
    let y = match &args.y {
        Some(text) => parse_vector("y", text)?,
        None => vec![0.0; len],
    };
    check_len("y", &y, len)?;
    let x = args.x.as_deref().map(|s| parse_vector("x", s)).transpose()?;
    if let Some(x) = &x {
        check_len("x", x, len)?;
    }
    if args.normalize_check && len > MAX_NORMALIZATION_DIM {
        return Err(usage(format!("--normalize-check supports n*d <= {MAX_NORMALIZATION_DIM}")));
    }
    if args.dirac_check && len > MAX_DIRAC_DIM {
        return Err(usage(format!("--dirac-check supports n*d <= {MAX_DIRAC_DIM}")));
    }

    let k = Kernel::<f64>::new(args.n, args.d).map_err(|e| usage(e.to_string()))?;
    let t = args.t;
    let (phi, pde_residual) = match &x {
        Some(x) => {
            let phi = k.phi(t, x, &y)?;
            let residual = match k.pde_residual(t, x, &y, FD_STEP) {
                Ok(r) => Some(r),
                Err(KernelError::StepTooLarge { .. }) => None,
                Err(e) => return Err(e.into()),
            };
            (Some(phi), residual)
        }
        None => (None, None),
    };

    let normalization = if args.normalize_check {
        let rows = [0.25 * t, t, 4.0 * t]
            .into_iter()
            .map(|s| {
                let mass = k.normalization(s, &y, NORMALIZATION_NODES, 1.5f64.sqrt())?;
                Ok(NormalizationRow { t: s, mass, error: (mass - 1.0).abs() })
            })
            .collect::<Result<Vec<_>>>()?;
        let passed = rows.iter().all(|r| r.error <= NORMALIZATION_TOL);
        Some(NormalizationSweep { nodes_per_axis: NORMALIZATION_NODES, tolerance: NORMALIZATION_TOL, passed, rows })
    } else {
        None
    };

    let dirac = if args.dirac_check {
        let times: Vec<f64> = (0..8).map(|k| t / 3f64.powi(k)).collect();
        let table = k.dirac_limit_check(&y, &times, |z| bump(&y, z))?;
        let passed = table.monotone && table.final_error() < DIRAC_TOL;
        Some(DiracSweep { test_function: "bump", bump_radius: BUMP_RADIUS, tolerance: DIRAC_TOL, passed, table })
    } else {
        None
    };

    let passed = normalization.as_ref().is_none_or(|s| s.passed) && dirac.as_ref().is_none_or(|s| s.passed);
    let report = KernelReport {
        n: args.n,
        d: args.d,
        t,
        beta: k.beta(),
        peak: k.peak(t),
        y,
        x,
        phi,
        pde_residual,
        normalization,
        dirac,
    };
    output::emit(&report, out_dir, "kernel.json")?;
    Ok(Verdict::from_bool(passed))
}
