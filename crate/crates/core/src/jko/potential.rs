use serde::{Deserialize, Serialize};

use crate::error::{MeasureError, SchemeError};
use crate::grid::{GridMeasure, TensorGrid};

/// Shape of the confining potential, applied to the last block `x_n` only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    Zero,
    /// `V(z) = stiffness |z|^2 / 2`.
    Quadratic {
        stiffness: f64,
    },
    /// `V(z) = sum_a p(z_a)` with `p(s) = sum_k coefficients[k] s^k`.
    Polynomial {
        coefficients: Vec<f64>,
    },
}

/// Potential `V(x_n)` with a declared Lipschitz constant for its gradient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub gradient_lipschitz: f64,
}

impl PotentialSpec {
    pub fn zero() -> Self {
        Self { kind: PotentialKind::Zero, gradient_lipschitz: 0.0 }
    }

    pub fn quadratic(stiffness: f64) -> Self {
        Self { kind: PotentialKind::Quadratic { stiffness }, gradient_lipschitz: stiffness.abs() }
    }

    pub fn polynomial(coefficients: Vec<f64>, gradient_lipschitz: f64) -> Self {
        Self { kind: PotentialKind::Polynomial { coefficients }, gradient_lipschitz }
    }

    pub fn is_zero(&self) -> bool {
        match &self.kind {
            PotentialKind::Zero => true,
            PotentialKind::Quadratic { stiffness } => *stiffness == 0.0,
            PotentialKind::Polynomial { coefficients } => coefficients.iter().all(|c| *c == 0.0),
        }
    }

    /// `V` at the last block `z = x_n`.
    pub fn value_last(&self, z: &[f64]) -> f64 {
        match &self.kind {
            PotentialKind::Zero => 0.0,
            PotentialKind::Quadratic { stiffness } => 0.5 * stiffness * z.iter().map(|v| v * v).sum::<f64>(),
            PotentialKind::Polynomial { coefficients } => {
                z.iter().map(|&s| coefficients.iter().rev().fold(0.0, |acc, c| acc * s + c)).sum()
            }
        }
    }

    /// `grad V` at the last block `z = x_n`.
    pub fn grad_last(&self, z: &[f64]) -> Vec<f64> {
        match &self.kind {
            PotentialKind::Zero => vec![0.0; z.len()],
            PotentialKind::Quadratic { stiffness } => z.iter().map(|v| stiffness * v).collect(),
            PotentialKind::Polynomial { coefficients } => z
                .iter()
                .map(|&s| coefficients.iter().enumerate().skip(1).rev().fold(0.0, |acc, (k, c)| acc * s + k as f64 * c))
                .collect(),
        }
    }

    /// `V(x_n)` for a full state of length `n * d`.
    pub fn value(&self, x: &[f64], d: usize) -> f64 {
        self.value_last(&x[x.len() - d..])
    }

    pub fn grad(&self, x: &[f64], d: usize) -> Vec<f64> {
        self.grad_last(&x[x.len() - d..])
    }

    /// Check `V >= 0` at every grid point and the gradient Lipschitz bound on
    /// neighbouring pairs along each last-block axis.
    pub fn validate(&self, grid: &TensorGrid, d: usize) -> Result<(), SchemeError> {
        if let PotentialKind::Polynomial { coefficients } = &self.kind {
            if coefficients.iter().any(|c| !c.is_finite()) {
                return Err(SchemeError::InvalidPotential("non-finite coefficient".into()));
            }
        }
        let dim = grid.dim();
        let last_axes = &grid.axes[dim - d..];
        let mut idx = vec![0usize; d];
        loop {
            let z: Vec<f64> = idx.iter().zip(last_axes).map(|(&i, a)| a.center(i)).collect();
            let v = self.value_last(&z);
            if !(v >= -1e-12) {
                return Err(SchemeError::InvalidPotential(format!("V = {v} < 0 at {z:?}")));
            }
            let g = self.grad_last(&z);
            for (a, axis) in last_axes.iter().enumerate() {
                if idx[a] + 1 < axis.cells {
                    let mut w = z.clone();
                    w[a] = axis.center(idx[a] + 1);
                    let g2 = self.grad_last(&w);
                    let dg = g.iter().zip(&g2).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
                    let bound = self.gradient_lipschitz * axis.width() * (1.0 + 1e-9) + 1e-12;
                    if dg > bound {
                        return Err(SchemeError::InvalidPotential(format!(
                            "gradient Lipschitz bound {} violated near {z:?}",
                            self.gradient_lipschitz
                        )));
                    }
                }
            }
            let mut carry = true;
            for (slot, axis) in idx.iter_mut().zip(last_axes).rev() {
                if !carry {
                    break;
                }
                *slot += 1;
                carry = *slot == axis.cells;
                if carry {
                    *slot = 0;
                }
            }
            if carry {
                return Ok(());
            }
        }
    }
}

/// Free energy split into its parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FreeEnergy {
    pub potential: f64,
    pub entropy: f64,
    pub total: f64,
    /// `int max(rho log rho, 0)`.
    pub positive_entropy: f64,
}

/// `F(rho) = int V(x_n) rho + int rho log rho` with cell densities `w_i / vol`.
pub fn free_energy(rho: &GridMeasure, potential: &PotentialSpec, d: usize) -> Result<FreeEnergy, MeasureError> {
    let vol = match rho.cell_volume() {
        Some(v) if v > 0.0 => v,
        other => return Err(MeasureError::ZeroVolume(other.unwrap_or(0.0))),
    };
    let mut pot = 0.0;
    let mut ent = 0.0;
    let mut pos = 0.0;
    for (i, &w) in rho.weights().iter().enumerate() {
        if w > 0.0 {
            pot += w * potential.value(rho.point(i), d);
            let s = w * (w / vol).ln();
            ent += s;
            pos += s.max(0.0);
        }
    }
    Ok(FreeEnergy { potential: pot, entropy: ent, total: pot + ent, positive_entropy: pos })
}
