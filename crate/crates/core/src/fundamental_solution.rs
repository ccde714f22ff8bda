//! The kernel `Phi(t, x, y) = beta t^{-n^2 d/2} exp(-C_t(x, y)/(4t))` and its checks.
//!
//! As a function of `(t, x)` the kernel solves the backward equation
//! `f_t = sum_{i>=2} x_i . grad_{x_{i-1}} f + Lap_{x_n} f`. As a function of
//! `(t, y)` for fixed `x` it is the transition density started at `x`, which
//! solves the forward (divergence-form) equation with zero potential; that is
//! the pairing used by [`Kernel::evolve_by_kernel`].

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::cost_kernel::{CostEvaluator, CostMatrices};
use crate::error::KernelError;
use crate::grid::GridMeasure;
use crate::quadrature::GaussianFrame;
use crate::scalar::{Real, Scalar};

/// Orders up to this value get a numerical normalization check at construction.
const BUILD_CHECK_MAX_ORDER: usize = 6;

/// `beta = (det(M_s) / (4 pi)^n)^{d/2}`, with `det(M_s)` computed exactly.
pub fn beta_constant(n: usize, d: usize) -> Result<f64, KernelError> {
    if d == 0 {
        return Err(KernelError::ZeroDimension);
    }
    let mats = CostMatrices::build(n)?;
    let det = mats.m_sym().det().to_f64_lossy();
    if !(det > 0.0) {
        return Err(KernelError::NotPositiveDefinite);
    }
    let log_beta = 0.5 * d as f64 * (det.ln() - n as f64 * (4.0 * std::f64::consts::PI).ln());
    Ok(log_beta.exp())
}

#[derive(Clone, Debug)]
pub struct Kernel<F: Real> {
    ev: CostEvaluator<F>,
    beta: F,
    log_beta: F,
}

impl<F: Real> Kernel<F> {
    pub fn new(n: usize, d: usize) -> Result<Self, KernelError> {
        let ev = CostEvaluator::<F>::new(n, d)?;
        let beta64 = beta_constant(n, d)?;
        let kernel = Self { ev, beta: F::c(beta64), log_beta: F::c(beta64.ln()) };
        if n <= BUILD_CHECK_MAX_ORDER {
            let k64 = Kernel::<f64>::from_parts(CostEvaluator::new(n, d)?, beta64);
            let mass = k64.normalization(1.0, &vec![0.0; n * d], 1, 1.0)?;
            if (mass - 1.0).abs() > 1e-8 {
                return Err(KernelError::QuadratureNotConverged((mass - 1.0).abs()));
            }
        }
        Ok(kernel)
    }

    fn from_parts(ev: CostEvaluator<F>, beta: f64) -> Self {
        Self { ev, beta: F::c(beta), log_beta: F::c(beta.ln()) }
    }

    pub fn evaluator(&self) -> &CostEvaluator<F> {
        &self.ev
    }

    pub fn beta(&self) -> F {
        self.beta
    }

    fn exponent(&self) -> F {
        let n = self.ev.order() as f64;
        F::c(0.5 * n * n * self.ev.dim() as f64)
    }

    /// `log Phi`, finite whenever the cost is.
    pub fn log_phi(&self, t: F, x: &[F], y: &[F]) -> Result<F, KernelError> {
        let c = self.ev.cost(t, x, y)?;
        Ok(self.log_beta - self.exponent() * t.ln() - c / (F::c(4.0) * t))
    }

    /// `Phi(t, x, y)`; underflows to zero for large cost, never NaN.
    pub fn phi(&self, t: F, x: &[F], y: &[F]) -> Result<F, KernelError> {
        Ok(self.log_phi(t, x, y)?.exp())
    }

    /// Upper bound `beta t^{-n^2 d/2}`.
    pub fn peak(&self, t: F) -> F {
        self.beta * t.powf(-self.exponent())
    }

    /// Relative finite-difference residual of the backward equation in `(t, x)`.
    ///
    /// Steps are `fd_step * t` in time and `fd_step * (1 + |x|)` in space, with
    /// central second-order stencils. The residual is divided by
    /// `max(|Phi_t|, beta t^{-n^2 d/2 - 1})`.
    pub fn pde_residual(&self, t: F, x: &[F], y: &[F], fd_step: F) -> Result<F, KernelError> {
        if !(t > F::c(10.0) * fd_step) || !(fd_step > F::zero()) {
            return Err(KernelError::StepTooLarge { t: t.to_f64_lossy(), step: fd_step.to_f64_lossy() });
        }
        let (n, d) = (self.ev.order(), self.ev.dim());
        let phi = |tt: F, xx: &[F]| self.phi(tt, xx, y);
        let norm = x.iter().fold(F::zero(), |acc, v| acc + *v * *v).sqrt();
        let hs = fd_step * (F::one() + norm);
        let ht = fd_step * t;
        let two = F::c(2.0);

        let phi_t = (phi(t + ht, x)? - phi(t - ht, x)?) / (two * ht);
        let center = phi(t, x)?;
        let mut xp = x.to_vec();
        let mut drift = F::zero();
        for i in 1..n {
            for a in 0..d {
                let k = (i - 1) * d + a;
                xp[k] = x[k] + hs;
                let fp = phi(t, &xp)?;
                xp[k] = x[k] - hs;
                let fm = phi(t, &xp)?;
                xp[k] = x[k];
                drift = drift + x[i * d + a] * (fp - fm) / (two * hs);
            }
        }
        let mut lap = F::zero();
        for a in 0..d {
            let k = (n - 1) * d + a;
            xp[k] = x[k] + hs;
            let fp = phi(t, &xp)?;
            xp[k] = x[k] - hs;
            let fm = phi(t, &xp)?;
            xp[k] = x[k];
            lap = lap + (fp - two * center + fm) / (hs * hs);
        }
        let scale = phi_t.abs().max(self.peak(t) / t);
        Ok((phi_t - drift - lap) / scale)
    }
}

/// One row of a Dirac-limit sweep.
#[derive(Clone, Debug, Serialize)]
pub struct DiracRow {
    pub t: f64,
    pub value: f64,
    pub error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiracTable {
    pub target: f64,
    pub rows: Vec<DiracRow>,
    /// Errors strictly decrease along the (decreasing) time sequence.
    pub monotone: bool,
}

impl DiracTable {
    pub fn final_error(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.error)
    }
}

/// Kernel evolution together with the mass lost to grid truncation.
#[derive(Clone, Debug)]
pub struct Evolved {
    pub measure: GridMeasure,
    pub mass_error: f64,
}

impl Kernel<f64> {
    /// Matrix `A` with `C_t(x, y)/(4t) = (x - mu)^T A (x - mu)`, and the centre `mu`.
    pub fn gaussian_form(&self, t: f64, y: &[f64]) -> Result<(DMatrix<f64>, Vec<f64>), KernelError> {
        if !(t > 0.0) {
            return Err(KernelError::NonPositiveTime(t));
        }
        let (n, d) = (self.ev.order(), self.ev.dim());
        if y.len() != n * d {
            return Err(KernelError::DimensionMismatch { expected: n * d, got: y.len() });
        }
        let h2 =
            DMatrix::from_fn(n, n, |i, j| if j < i { 0.0 } else { t.powi(j as i32) / f64::factorial((j - i) as u32) });
        let ms = DMatrix::from_row_slice(n, n, self.ev.m_sym());
        let s = h2.transpose() * ms * &h2 * (t.powi(1 - 2 * n as i32) / 4.0);
        let a = DMatrix::from_fn(n * d, n * d, |r, c| if r % d == c % d { s[(r / d, c / d)] } else { 0.0 });
        let h2_full = DMatrix::from_fn(n * d, n * d, |r, c| if r % d == c % d { h2[(r / d, c / d)] } else { 0.0 });
        let rhs = DVector::from_fn(n * d, |r, _| t.powi((r / d) as i32) * y[r]);
        let mu = h2_full.lu().solve(&rhs).ok_or(KernelError::Singular)?;
        Ok((a, mu.as_slice().to_vec()))
    }

    /// `int Phi(t, x, y) dx` by tensor Gauss-Hermite in coordinates stretched by `stretch`.
    pub fn normalization(&self, t: f64, y: &[f64], nodes: usize, stretch: f64) -> Result<f64, KernelError> {
        let (a, mu) = self.gaussian_form(t, y)?;
        let frame = GaussianFrame::new(a, mu, stretch)?;
        Ok(frame.gauss_hermite(nodes, |x| self.phi(t, x, y).unwrap_or(f64::NAN)))
    }

    /// `int Phi(t, x, y) test(x) dx` for each `t`, compared with `test(y)`.
    ///
    /// Uses the trapezoid rule on `[-8, 8]^{nd}` in coordinates where the
    /// Gaussian factor is standard, refined until the relative change is
    /// below `1e-10`.
    pub fn dirac_limit_check(
        &self,
        y: &[f64],
        times: &[f64],
        test: impl Fn(&[f64]) -> f64,
    ) -> Result<DiracTable, KernelError> {
        let target = test(y);
        let mut rows = Vec::with_capacity(times.len());
        for &t in times {
            let (a, mu) = self.gaussian_form(t, y)?;
            let frame = GaussianFrame::new(a, mu, 1.0)?;
            let value = frame.trapezoid(8.0, 9, 1e-10, 2049, |x| self.phi(t, x, y).unwrap_or(f64::NAN) * test(x))?;
            rows.push(DiracRow { t, value, error: (value - target).abs() });
        }
        let monotone = rows.windows(2).all(|w| w[1].error < w[0].error);
        Ok(DiracTable { target, rows, monotone })
    }

    /// Superpose kernels started at the support of `rho0`:
    /// `rho(t, z) = sum_j w_j Phi(t, y_j, z)`, sampled on the same cells.
    pub fn evolve_by_kernel(&self, rho0: &GridMeasure, t: f64) -> Result<Evolved, KernelError> {
        if !(t > 0.0) {
            return Err(KernelError::NonPositiveTime(t));
        }
        let dim = self.ev.state_len();
        if rho0.dim() != dim {
            return Err(KernelError::DimensionMismatch { expected: dim, got: rho0.dim() });
        }
        let vol = rho0.cell_volume().ok_or(KernelError::GridTooCoarse(f64::INFINITY))?;
        let at = self.ev.at(t)?;
        let log_norm = self.log_beta - self.exponent() * t.ln();
        let sources: Vec<(usize, f64)> = rho0.weights().iter().copied().enumerate().filter(|(_, w)| *w > 0.0).collect();
        let mut buf = vec![0.0; dim];
        let raw: Vec<f64> = (0..rho0.len())
            .map(|i| {
                let z = rho0.point(i);
                let dens: f64 = sources
                    .iter()
                    .map(|&(j, w)| {
                        let c = at.cost_with(rho0.point(j), z, &mut buf);
                        w * (log_norm - c / (4.0 * t)).exp()
                    })
                    .sum();
                dens * vol
            })
            .collect();
        let mass: f64 = raw.iter().sum();
        let mass_error = (mass - 1.0).abs();
        if mass_error > 1e-2 {
            return Err(KernelError::GridTooCoarse(mass_error));
        }
        let weights = raw.into_iter().map(|w| w / mass).collect();
        let measure = rho0.with_weights(weights).map_err(|_| KernelError::GridTooCoarse(mass_error))?;
        Ok(Evolved { measure, mass_error })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn known_constants() {
        for d in 1..=3 {
            let b1 = beta_constant(1, d).unwrap();
            assert!((b1 / (4.0 * PI).powf(-(d as f64) / 2.0) - 1.0).abs() < 1e-13);
            let b2 = beta_constant(2, d).unwrap();
            assert!((b2 / (3f64.sqrt() / (2.0 * PI)).powi(d as i32) - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn peak_value_at_rest() {
        let k = Kernel::<f64>::new(2, 1).unwrap();
        let v = k.phi(1.0, &[0.7, 0.0], &[0.7, 0.0]).unwrap();
        assert!((v - 3f64.sqrt() / (2.0 * PI)).abs() < 1e-14);
    }

    #[test]
    fn underflow_is_zero_not_nan() {
        let k = Kernel::<f64>::new(3, 1).unwrap();
        let v = k.phi(1e-3, &[50.0, -40.0, 30.0], &[0.0; 3]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn gaussian_normalization_n2() {
        let k = Kernel::<f64>::new(2, 1).unwrap();
        let mass = k.normalization(0.7, &[0.4, -1.1], 24, 1.5f64.sqrt()).unwrap();
        assert!((mass - 1.0).abs() < 1e-10, "mass {mass}");
    }

    #[test]
    fn small_step_rejected() {
        let k = Kernel::<f64>::new(1, 1).unwrap();
        assert!(k.pde_residual(1e-5, &[0.0], &[0.0], 1e-4).is_err());
    }
}
