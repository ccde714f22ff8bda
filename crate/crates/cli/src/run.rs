use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use kolmogorov_jko::jko::{
    convergence_report, equicontinuity_monitor, run_scheme, ConvergenceReport, EquicontinuityTable, FreeEnergy,
    Reference, StepRecord,
};
use kolmogorov_jko::SchemeError;
use serde::Serialize;

use crate::config::RunConfig;
use crate::{output, Verdict};

const DEFAULT_OUT_DIR: &str = "kjko-out";
/// Snapshots written by default over a run, besides the initial one.
const DEFAULT_SNAPSHOTS: usize = 10;

#[derive(Serialize)]
struct Snapshot {
    step: usize,
    time: f64,
    file: String,
}

#[derive(Serialize)]
struct Monitors {
    max_energy_gap: f64,
    max_corrected_energy_gap: f64,
    max_optimizer_gap: f64,
    transport_sum: f64,
    max_second_moment: f64,
    max_boundary_mass: f64,
    final_mass_error: f64,
    min_final_weight: f64,
}

#[derive(Serialize)]
struct Summary<'a> {
    config: &'a RunConfig,
    seed: u64,
    h: f64,
    t_end: f64,
    steps: usize,
    epsilon: f64,
    initial_energy: FreeEnergy,
    records: &'a [StepRecord],
    monitors: Monitors,
    equicontinuity: Option<EquicontinuityTable>,
    snapshots: Vec<Snapshot>,
    convergence: Option<ConvergenceReport>,
    notes: Vec<String>,
}

pub fn jko(config_path: &Path, seed_flag: Option<u64>, out_dir: Option<&Path>) -> Result<Verdict> {
    let cfg = RunConfig::load(config_path)?;
    let seed = seed_flag.or(cfg.seed).unwrap_or(0);
    let problem = cfg.problem()?;
    let rho0 = cfg.initial_density(&problem, seed)?;
    let out_dir: PathBuf = out_dir.map_or_else(|| PathBuf::from(DEFAULT_OUT_DIR), Path::to_path_buf);
    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let state = run_scheme(&problem, &rho0, cfg.h, cfg.t_end, &cfg.solver).context("scheme run failed")?;
    let mut notes = Vec::new();

    let steps = state.steps();
    let every = cfg.snapshot_every.unwrap_or_else(|| (steps / DEFAULT_SNAPSHOTS).max(1));
    let mut snapshots = Vec::new();
    for (k, rho) in state.densities.iter().enumerate() {
        if k % every == 0 || k == steps {
            let file = format!("density_step{k:05}.csv");
            output::write_density_csv(&out_dir.join(&file), rho)?;
            snapshots.push(Snapshot { step: k, time: k as f64 * state.h, file });
        }
    }

    let equicontinuity = if cfg.equicontinuity {
        Some(equicontinuity_monitor(&state).context("equicontinuity monitor failed")?)
    } else {
        None
    };

    let convergence = if cfg.convergence_h.is_empty() {
        notes.push("convergence table not requested (convergence_h is empty)".into());
        None
    } else {
        match Reference::select(cfg.n, &problem.potential, cfg.gaussian_start()) {
            Ok(reference) => Some(
                convergence_report(&problem, &rho0, cfg.t_end, &cfg.convergence_h, &reference, &cfg.solver)
                    .context("convergence runs failed")?,
            ),
            Err(SchemeError::NoReference { n }) => {
                notes.push(format!(
                    "no analytic reference for n = {n} with this potential and start; convergence table skipped"
                ));
                None
            }
            Err(e) => return Err(e.into()),
        }
    };

    let last = state.final_density();
    let monitors = Monitors {
        max_energy_gap: state.max_energy_gap(),
        max_corrected_energy_gap: state.max_corrected_energy_gap(),
        max_optimizer_gap: state.max_optimizer_gap(),
        transport_sum: state.transport_sum(),
        max_second_moment: state.max_second_moment(),
        max_boundary_mass: state.records.iter().map(|r| r.boundary_mass).fold(0.0, f64::max),
        final_mass_error: (last.weights().iter().sum::<f64>() - 1.0).abs(),
        min_final_weight: last.weights().iter().copied().fold(f64::INFINITY, f64::min),
    };

    let summary = Summary {
        config: &cfg,
        seed,
        h: state.h,
        t_end: state.t_end,
        steps,
        epsilon: state.epsilon,
        initial_energy: state.initial_energy,
        records: &state.records,
        monitors,
        equicontinuity,
        snapshots,
        convergence,
        notes,
    };
    output::emit(&summary, Some(&out_dir), "summary.json")?;
    Ok(Verdict::Pass)
}
