//! Run configuration for `kjko jko`, validated before any work starts.

use std::fs;
use std::path::Path;

use anyhow::Result;
use kolmogorov_jko::grid::{Axis, GridMeasure, TensorGrid};
use kolmogorov_jko::jko::{JkoConfig, PotentialSpec, Problem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::usage;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub cells: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialConfig {
    Zero,
    Quadratic {
        stiffness: f64,
    },
    /// Per-coordinate polynomial with coefficients in increasing degree.
    Polynomial {
        coefficients: Vec<f64>,
        gradient_lipschitz: f64,
    },
}

impl PotentialConfig {
    fn spec(&self) -> PotentialSpec {
        match self {
            PotentialConfig::Zero => PotentialSpec::zero(),
            PotentialConfig::Quadratic { stiffness } => PotentialSpec::quadratic(*stiffness),
            PotentialConfig::Polynomial { coefficients, gradient_lipschitz } => {
                PotentialSpec::polynomial(coefficients.clone(), *gradient_lipschitz)
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    /// Isotropic Gaussian `exp(-|x - mean|^2 / (2 variance))`.
    Gaussian { mean: Vec<f64>, variance: f64 },
    /// Gaussian multiplied cell by cell by `1 + amplitude * U(-1, 1)`, drawn from the seed.
    PerturbedGaussian { mean: Vec<f64>, variance: f64, amplitude: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n: usize,
    pub d: usize,
    pub grid: GridConfig,
    pub potential: PotentialConfig,
    pub initial: InitialConfig,
    /// Time step of the main run.
    pub h: f64,
    /// Final time.
    pub t_end: f64,
    /// Step sizes for the convergence table; empty skips it.
    #[serde(default)]
    pub convergence_h: Vec<f64>,
    /// Write a density snapshot every this many steps (the last step is always written).
    #[serde(default)]
    pub snapshot_every: Option<usize>,
    #[serde(default = "yes")]
    pub equicontinuity: bool,
    #[serde(default)]
    pub solver: JkoConfig,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn yes() -> bool {
    true
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(usage(format!("{name} must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| usage(format!("reading {}: {e}", path.display())))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| usage(format!("parsing {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(usage("n and d must be at least 1"));
        }
        let dim = self.n * self.d;
        let g = &self.grid;
        if g.lo.len() != dim || g.hi.len() != dim || g.cells.len() != dim {
            return Err(usage(format!("grid lo, hi and cells need n*d = {dim} entries each")));
        }
        positive("h", self.h)?;
        positive("t_end", self.t_end)?;
        for &h in &self.convergence_h {
            positive("convergence_h entry", h)?;
        }
        if self.snapshot_every == Some(0) {
            return Err(usage("snapshot_every must be at least 1"));
        }
        let (mean, variance) = self.gaussian_parts();
        if mean.len() != dim {
            return Err(usage(format!("initial mean needs n*d = {dim} entries, got {}", mean.len())));
        }
        positive("initial variance", variance)?;
        if let InitialConfig::PerturbedGaussian { amplitude, .. } = self.initial {
            if !(0.0..1.0).contains(&amplitude) {
                return Err(usage(format!("perturbation amplitude must lie in [0, 1), got {amplitude}")));
            }
        }
        positive("solver.kappa", self.solver.kappa)?;
        if let Some(eps) = self.solver.epsilon {
            positive("solver.epsilon", eps)?;
        }
        Ok(())
    }

    fn gaussian_parts(&self) -> (&[f64], f64) {
        match &self.initial {
            InitialConfig::Gaussian { mean, variance } | InitialConfig::PerturbedGaussian { mean, variance, .. } => {
                (mean, *variance)
            }
        }
    }

    /// Mean and variance when the start is an exact Gaussian, for analytic references.
    pub fn gaussian_start(&self) -> Option<(Vec<f64>, f64)> {
        match &self.initial {
            InitialConfig::Gaussian { mean, variance } => Some((mean.clone(), *variance)),
            InitialConfig::PerturbedGaussian { .. } => None,
        }
    }

    pub fn problem(&self) -> Result<Problem> {
        let axes = self
            .grid
            .lo
            .iter()
            .zip(&self.grid.hi)
            .zip(&self.grid.cells)
            .map(|((&lo, &hi), &cells)| Axis::new(lo, hi, cells))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| usage(format!("grid: {e}")))?;
        Problem::new(self.n, self.d, TensorGrid::new(axes), self.potential.spec())
            .map_err(|e| usage(format!("problem: {e}")))
    }

    pub fn initial_density(&self, problem: &Problem, seed: u64) -> Result<GridMeasure> {
        let (mean, variance) = self.gaussian_parts();
        let gaussian = |x: &[f64]| {
            let r2: f64 = x.iter().zip(mean).map(|(a, m)| (a - m).powi(2)).sum();
            (-r2 / (2.0 * variance)).exp()
        };
        let rho = problem.initial_density(gaussian).map_err(|e| usage(format!("initial density: {e}")))?;
        match self.initial {
            InitialConfig::Gaussian { .. } => Ok(rho),
            InitialConfig::PerturbedGaussian { amplitude, .. } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let weights: Vec<f64> =
                    rho.weights().iter().map(|w| w * (1.0 + amplitude * rng.random_range(-1.0..1.0))).collect();
                let weights = kolmogorov_jko::grid::normalize(weights).map_err(|e| usage(e.to_string()))?;
                rho.with_weights(weights).map_err(|e| usage(e.to_string()))
            }
        }
    }
}
