//! Tensor quadrature in coordinates aligned with a Gaussian factor.

use std::num::NonZeroUsize;

use gauss_quad::hermite::GaussHermite;
use nalgebra::{DMatrix, DVector};

use crate::error::KernelError;

/// Affine frame `x = mean + map * u` that turns `(x-mean)^T A (x-mean)` into `s^2 |u|^2`.
#[derive(Clone, Debug)]
pub struct GaussianFrame {
    mean: DVector<f64>,
    map: DMatrix<f64>,
    jacobian: f64,
}

impl GaussianFrame {
    /// `a` must be symmetric positive definite; `stretch` is `s`.
    pub fn new(a: DMatrix<f64>, mean: Vec<f64>, stretch: f64) -> Result<Self, KernelError> {
        let dim = mean.len();
        let chol = a.cholesky().ok_or(KernelError::NotPositiveDefinite)?;
        // A = L L^T, u = s^{-1} L^T (x - mean)  =>  x = mean + s L^{-T} u
        let l_t_inv = chol.l().transpose().try_inverse().ok_or(KernelError::Singular)?;
        let map = l_t_inv * (1.0 / stretch);
        let jacobian = map.determinant().abs();
        debug_assert_eq!(map.nrows(), dim);
        Ok(Self { mean: DVector::from_vec(mean), map, jacobian })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn jacobian(&self) -> f64 {
        self.jacobian
    }

    pub fn to_x(&self, u: &[f64]) -> Vec<f64> {
        let x = &self.mean + &self.map * DVector::from_column_slice(u);
        x.as_slice().to_vec()
    }

    /// `int f(x) dx` by a tensor Gauss-Hermite rule in `u`.
    ///
    /// The rule's weight `e^{-|u|^2}` is divided out, so `f` need not contain it.
    pub fn gauss_hermite(&self, nodes: usize, f: impl Fn(&[f64]) -> f64) -> f64 {
        let rule = GaussHermite::new(NonZeroUsize::new(nodes.max(1)).expect("non-zero"));
        let pairs: Vec<(f64, f64)> = rule.as_node_weight_pairs().iter().map(|&(x, w)| (x, w * (x * x).exp())).collect();
        let dim = self.dim();
        let mut idx = vec![0usize; dim];
        let mut u = vec![0.0; dim];
        let mut total = 0.0;
        loop {
            let mut w = 1.0;
            for (k, &i) in idx.iter().enumerate() {
                u[k] = pairs[i].0;
                w *= pairs[i].1;
            }
            total += w * f(&self.to_x(&u));
            if !advance(&mut idx, pairs.len()) {
                break;
            }
        }
        total * self.jacobian
    }

    /// `int f(x) dx` by the trapezoid rule on `u in [-radius, radius]^dim`,
    /// doubling the resolution until the relative change drops below `rel_tol`.
    pub fn trapezoid(
        &self,
        radius: f64,
        start_points: usize,
        rel_tol: f64,
        max_points: usize,
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<f64, KernelError> {
        let mut m = start_points.max(3);
        let mut prev = self.trapezoid_fixed(radius, m, &f);
        let mut change = f64::INFINITY;
        while m < max_points {
            m = 2 * m - 1;
            let cur = self.trapezoid_fixed(radius, m, &f);
            change = (cur - prev).abs() / cur.abs().max(f64::MIN_POSITIVE);
            prev = cur;
            if change < rel_tol {
                return Ok(cur);
            }
        }
        Err(KernelError::QuadratureNotConverged(change))
    }

    fn trapezoid_fixed(&self, radius: f64, m: usize, f: &impl Fn(&[f64]) -> f64) -> f64 {
        let dim = self.dim();
        let step = 2.0 * radius / (m - 1) as f64;
        let mut idx = vec![0usize; dim];
        let mut u = vec![0.0; dim];
        let mut total = 0.0;
        loop {
            let mut w = 1.0;
            for (k, &i) in idx.iter().enumerate() {
                u[k] = -radius + step * i as f64;
                if i == 0 || i == m - 1 {
                    w *= 0.5;
                }
            }
            total += w * f(&self.to_x(&u));
            if !advance(&mut idx, m) {
                break;
            }
        }
        total * step.powi(dim as i32) * self.jacobian
    }
}

/// Odometer increment; returns `false` after the last index.
fn advance(idx: &mut [usize], base: usize) -> bool {
    for slot in idx.iter_mut().rev() {
        *slot += 1;
        if *slot < base {
            return true;
        }
        *slot = 0;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correlated_gaussian_mass() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let det: f64 = 2.0 - 0.25;
        let frame = GaussianFrame::new(a.clone(), vec![0.3, -1.0], 1.2).unwrap();
        let f = |x: &[f64]| {
            let (p, q) = (x[0] - 0.3, x[1] + 1.0);
            (-(2.0 * p * p + p * q + q * q)).exp()
        };
        let want = std::f64::consts::PI / det.sqrt();
        assert!((frame.gauss_hermite(30, f) - want).abs() < 1e-10);
        let trap = frame.trapezoid(8.0, 9, 1e-12, 2000, f).unwrap();
        assert!((trap - want).abs() < 1e-10);
    }
}
