//! Floating-point evaluation of the cost, its derivatives and the PDE residual.
//!
//! State vectors have length `n * d`: block `i` (zero-based) occupies
//! `x[i*d .. (i+1)*d]`. The scalar `n x n` matrices act blockwise, so the
//! Kronecker product with `I_d` is never formed.

use nalgebra::{DMatrix, SymmetricEigen};

use super::matrices::{build_m, check_order, MAX_ORDER};
use crate::error::KernelError;
use crate::matrix::Matrix;
use crate::scalar::{rational_to_real, Real};
use crate::Rational;

/// Boundary data `(x_1, ..., x_n)` with each `x_i` in `R^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryState<F> {
    pub n: usize,
    pub d: usize,
    pub coords: Vec<F>,
}

impl<F: Real> BoundaryState<F> {
    pub fn new(n: usize, d: usize, coords: Vec<F>) -> Result<Self, KernelError> {
        if d == 0 {
            return Err(KernelError::ZeroDimension);
        }
        check_order(n, MAX_ORDER)?;
        if coords.len() != n * d {
            return Err(KernelError::DimensionMismatch { expected: n * d, got: coords.len() });
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(KernelError::NonFinite);
        }
        Ok(Self { n, d, coords })
    }

    pub fn block(&self, i: usize) -> &[F] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }
}

/// Cached float matrices for one order and dimension.
#[derive(Clone, Debug)]
pub struct CostEvaluator<F: Real> {
    n: usize,
    d: usize,
    /// `M` row-major.
    m: Vec<F>,
    /// Symmetric part of `M`, row-major.
    m_sym: Vec<F>,
    /// Smallest eigenvalue of `M_s`, in `f64`.
    lambda_min: f64,
    /// Comparability constant for `t <= 1`.
    k_bound: F,
}

impl<F: Real> CostEvaluator<F> {
    /// Build from the exact matrix `M`; fails if `M_s` is not positive definite.
    pub fn new(n: usize, d: usize) -> Result<Self, KernelError> {
        check_order(n, MAX_ORDER)?;
        if d == 0 {
            return Err(KernelError::ZeroDimension);
        }
        let exact: Matrix<Rational> = build_m(n)?;
        let m: Vec<F> = exact.as_slice().iter().map(rational_to_real).collect();
        let mut m_sym = vec![F::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                m_sym[i * n + j] = (m[i * n + j] + m[j * n + i]) * F::c(0.5);
            }
        }
        let ms64 = DMatrix::from_fn(n, n, |i, j| m_sym[i * n + j].to_f64_lossy());
        if ms64.clone().cholesky().is_none() {
            return Err(KernelError::NotPositiveDefinite);
        }
        let lambda_min = SymmetricEigen::new(ms64).eigenvalues.min();
        let mut ev = Self { n, d, m, m_sym, lambda_min, k_bound: F::one() };
        ev.k_bound = ev.comparability_constant(F::one())?;
        Ok(ev)
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn state_len(&self) -> usize {
        self.n * self.d
    }

    pub fn m(&self) -> &[F] {
        &self.m
    }

    pub fn m_sym(&self) -> &[F] {
        &self.m_sym
    }

    /// Comparability constant for horizons up to `t = 1`.
    pub fn k_bound(&self) -> F {
        self.k_bound
    }

    /// `det(M_s)`, via Cholesky in `f64`.
    pub fn det_m_sym(&self) -> f64 {
        let n = self.n;
        let ms = DMatrix::from_fn(n, n, |i, j| self.m_sym[i * n + j].to_f64_lossy());
        ms.cholesky().map(|c| c.determinant()).unwrap_or(f64::NAN)
    }

    /// Explicit `K` with `|y-x|^2 <= K [C_t(x,y) + t^2(|x|^2+|y|^2)]` for all `0 < t <= t_max`.
    ///
    /// From `y - x = Tbar Q^{-1} z + w`: `K = 2 max(|Tbar|^2 |Q^{-1}|^2, c_w^2)` where
    /// `|Tbar| <= max(1, t_max^{n-1})`, `|Q^{-1}|^2 = 1/lambda_min(M_s)`, and
    /// `|w| <= t |x| sum_{m=1}^{n-1} t_max^{m-1}/m!`.
    pub fn comparability_constant(&self, t_max: F) -> Result<F, KernelError> {
        let tm = t_max.to_f64_lossy();
        if !(tm > 0.0) {
            return Err(KernelError::NonPositiveTime(tm));
        }
        let tbar = tm.powi(self.n as i32 - 1).max(1.0);
        let mut c_w = 0.0;
        let mut fact = 1.0;
        for m in 1..self.n {
            fact *= m as f64;
            c_w += tm.powi(m as i32 - 1) / fact;
        }
        Ok(F::c(2.0 * (tbar * tbar / self.lambda_min).max(c_w * c_w)))
    }

    fn check_t(&self, t: F) -> Result<(), KernelError> {
        if t > F::zero() && t.is_finite() {
            Ok(())
        } else {
            Err(KernelError::NonPositiveTime(t.to_f64_lossy()))
        }
    }

    fn check_len(&self, v: &[F]) -> Result<(), KernelError> {
        if v.len() != self.state_len() {
            return Err(KernelError::DimensionMismatch { expected: self.state_len(), got: v.len() });
        }
        if v.iter().all(|c| c.is_finite()) {
            Ok(())
        } else {
            Err(KernelError::NonFinite)
        }
    }

    /// Fixed-time view with the time matrices precomputed.
    pub fn at(&self, t: F) -> Result<CostAt<'_, F>, KernelError> {
        self.check_t(t)?;
        Ok(CostAt::new(self, t))
    }

    /// `b = H_1(t) y - H_2(t) x`.
    pub fn assemble_b(&self, t: F, x: &[F], y: &[F]) -> Result<Vec<F>, KernelError> {
        self.check_len(x)?;
        self.check_len(y)?;
        Ok(self.at(t)?.b(x, y))
    }

    /// `C_t(x, y) = t^{2-2n} b^T M b`.
    pub fn cost(&self, t: F, x: &[F], y: &[F]) -> Result<F, KernelError> {
        self.check_len(x)?;
        self.check_len(y)?;
        Ok(self.at(t)?.cost(x, y))
    }

    /// `grad_x C = -2 t^{2-2n} H_2^T M b`.
    pub fn cost_grad_x(&self, t: F, x: &[F], y: &[F]) -> Result<Vec<F>, KernelError> {
        self.check_len(x)?;
        self.check_len(y)?;
        Ok(self.at(t)?.grad_x(x, y))
    }

    /// `grad_y C = 2 t^{2-2n} H_1^T M b`.
    pub fn cost_grad_y(&self, t: F, x: &[F], y: &[F]) -> Result<Vec<F>, KernelError> {
        self.check_len(x)?;
        self.check_len(y)?;
        Ok(self.at(t)?.grad_y(x, y))
    }

    /// `d/dt C_t(x, y)` at fixed `x, y`.
    pub fn cost_dt(&self, t: F, x: &[F], y: &[F]) -> Result<F, KernelError> {
        self.check_len(x)?;
        self.check_len(y)?;
        Ok(self.at(t)?.dt(x, y))
    }

    /// Laplacian of `C` in the last block of `x`; constant `2 d n^2`.
    pub fn cost_laplacian_xn(&self, t: F, x: &[F], y: &[F]) -> Result<F, KernelError> {
        self.check_len(x)?;
        self.check_len(y)?;
        Ok(self.at(t)?.laplacian_xn())
    }

    /// `sum_{i>=2} x_i . grad_{x_{i-1}} C = x^T Q grad_x C`.
    pub fn cost_transport_term(&self, t: F, x: &[F], y: &[F]) -> Result<F, KernelError> {
        self.check_len(x)?;
        self.check_len(y)?;
        Ok(self.at(t)?.transport_term(x, y))
    }

    /// `d_t C - [C/t + transport - |grad_{x_n} C|^2/(4t) + Lap_{x_n} C - 2 d n^2]`.
    pub fn verify_cost_pde(&self, t: F, x: &[F], y: &[F]) -> Result<F, KernelError> {
        self.check_len(x)?;
        self.check_len(y)?;
        Ok(self.at(t)?.pde_residual(x, y))
    }
}

/// Cost kernel frozen at one time `t`.
#[derive(Clone, Debug)]
pub struct CostAt<'a, F: Real> {
    ev: &'a CostEvaluator<F>,
    t: F,
    /// `t^{i}` for `i = 0..n`.
    pow: Vec<F>,
    /// `H_2(t)` row-major.
    h2: Vec<F>,
    /// `H_2'(t)` row-major.
    h2_dot: Vec<F>,
    /// `t^{2-2n}`.
    scale: F,
}

impl<'a, F: Real> CostAt<'a, F> {
    fn new(ev: &'a CostEvaluator<F>, t: F) -> Self {
        let n = ev.n;
        let pow: Vec<F> = (0..n).map(|i| t.powi(i as i32)).collect();
        let mut inv_fact = vec![F::one(); n];
        for k in 1..n {
            inv_fact[k] = inv_fact[k - 1] / F::c(k as f64);
        }
        let mut h2 = vec![F::zero(); n * n];
        let mut h2_dot = vec![F::zero(); n * n];
        for i in 0..n {
            for j in i..n {
                h2[i * n + j] = pow[j] * inv_fact[j - i];
                if j > 0 {
                    h2_dot[i * n + j] = F::c(j as f64) * pow[j - 1] * inv_fact[j - i];
                }
            }
        }
        let scale = t.powi(2 - 2 * n as i32);
        Self { ev, t, pow, h2, h2_dot, scale }
    }

    pub fn t(&self) -> F {
        self.t
    }

    /// Free-flow image: the unique `y` with `b = 0`.
    pub fn free_flow(&self, x: &[F]) -> Vec<F> {
        let (n, d) = (self.ev.n, self.ev.d);
        let mut y = vec![F::zero(); n * d];
        for i in 0..n {
            for j in i..n {
                let c = self.h2[i * n + j] / self.pow[i];
                for a in 0..d {
                    y[i * d + a] = y[i * d + a] + c * x[j * d + a];
                }
            }
        }
        y
    }

    pub fn b(&self, x: &[F], y: &[F]) -> Vec<F> {
        let mut out = vec![F::zero(); self.ev.n * self.ev.d];
        self.b_into(x, y, &mut out);
        out
    }

    fn b_into(&self, x: &[F], y: &[F], out: &mut [F]) {
        let (n, d) = (self.ev.n, self.ev.d);
        for i in 0..n {
            for a in 0..d {
                let mut acc = self.pow[i] * y[i * d + a];
                for j in i..n {
                    acc = acc - self.h2[i * n + j] * x[j * d + a];
                }
                out[i * d + a] = acc;
            }
        }
    }

    /// Blockwise `out = S v` for an `n x n` row-major `S`.
    fn apply(&self, s: &[F], v: &[F]) -> Vec<F> {
        let (n, d) = (self.ev.n, self.ev.d);
        let mut out = vec![F::zero(); n * d];
        for i in 0..n {
            for j in 0..n {
                let c = s[i * n + j];
                if c.is_zero() {
                    continue;
                }
                for a in 0..d {
                    out[i * d + a] = out[i * d + a] + c * v[j * d + a];
                }
            }
        }
        out
    }

    /// Blockwise `out = S^T v`.
    fn apply_t(&self, s: &[F], v: &[F]) -> Vec<F> {
        let (n, d) = (self.ev.n, self.ev.d);
        let mut out = vec![F::zero(); n * d];
        for i in 0..n {
            for j in 0..n {
                let c = s[j * n + i];
                if c.is_zero() {
                    continue;
                }
                for a in 0..d {
                    out[i * d + a] = out[i * d + a] + c * v[j * d + a];
                }
            }
        }
        out
    }

    fn dot(u: &[F], v: &[F]) -> F {
        u.iter().zip(v).fold(F::zero(), |acc, (a, b)| acc + *a * *b)
    }

    /// Allocation-free cost using a caller-owned buffer of length `n*d`.
    pub fn cost_with(&self, x: &[F], y: &[F], buf: &mut [F]) -> F {
        let (n, d) = (self.ev.n, self.ev.d);
        self.b_into(x, y, buf);
        let m = &self.ev.m_sym;
        let mut acc = F::zero();
        for i in 0..n {
            for j in 0..n {
                let c = m[i * n + j];
                for a in 0..d {
                    acc = acc + c * buf[i * d + a] * buf[j * d + a];
                }
            }
        }
        (self.scale * acc).max(F::zero())
    }

    pub fn cost(&self, x: &[F], y: &[F]) -> F {
        let mut buf = vec![F::zero(); self.ev.n * self.ev.d];
        self.cost_with(x, y, &mut buf)
    }

    pub fn grad_x(&self, x: &[F], y: &[F]) -> Vec<F> {
        // C = s b^T M b with db/dx = -H_2, so grad_x = -s H_2^T (M + M^T) b.
        let b = self.b(x, y);
        let mb = self.apply(&self.ev.m, &b);
        let mtb = self.apply_t(&self.ev.m, &b);
        let sum: Vec<F> = mb.iter().zip(&mtb).map(|(u, v)| *u + *v).collect();
        self.apply_t(&self.h2, &sum).into_iter().map(|v| -self.scale * v).collect()
    }

    pub fn grad_y(&self, x: &[F], y: &[F]) -> Vec<F> {
        let b = self.b(x, y);
        let mb = self.apply(&self.ev.m, &b);
        let mtb = self.apply_t(&self.ev.m, &b);
        let d = self.ev.d;
        mb.iter().zip(&mtb).enumerate().map(|(k, (u, v))| self.scale * self.pow[k / d] * (*u + *v)).collect()
    }

    pub fn dt(&self, x: &[F], y: &[F]) -> F {
        let (n, d) = (self.ev.n, self.ev.d);
        let b = self.b(x, y);
        // b' = H_1' y - H_2' x
        let mut b_dot = vec![F::zero(); n * d];
        for i in 0..n {
            let h1_dot = if i == 0 { F::zero() } else { F::c(i as f64) * self.pow[i - 1] };
            for a in 0..d {
                let mut acc = h1_dot * y[i * d + a];
                for j in i..n {
                    acc = acc - self.h2_dot[i * n + j] * x[j * d + a];
                }
                b_dot[i * d + a] = acc;
            }
        }
        let msb = self.apply(&self.ev.m_sym, &b);
        let quad = Self::dot(&b, &msb);
        let two = F::c(2.0);
        let dscale = F::c(2.0 - 2.0 * n as f64) / self.t;
        dscale * self.scale * quad + two * self.scale * Self::dot(&b_dot, &msb)
    }

    /// `2 t^{2-2n} d (H_2^T M_s H_2)_{nn}`, which equals `2 d n^2` for every `t`.
    pub fn laplacian_xn(&self) -> F {
        let n = self.ev.n;
        let ms = &self.ev.m_sym;
        let mut acc = F::zero();
        for k in 0..n {
            for l in 0..n {
                acc = acc + self.h2[k * n + (n - 1)] * ms[k * n + l] * self.h2[l * n + (n - 1)];
            }
        }
        F::c(2.0) * self.scale * F::c(self.ev.d as f64) * acc
    }

    pub fn transport_term(&self, x: &[F], y: &[F]) -> F {
        let d = self.ev.d;
        let g = self.grad_x(x, y);
        // x^T Q g = sum_{i>=1} x_{i+1} . g_i (zero-based blocks)
        let mut acc = F::zero();
        for i in 0..self.ev.n - 1 {
            for a in 0..d {
                acc = acc + x[(i + 1) * d + a] * g[i * d + a];
            }
        }
        acc
    }

    pub fn pde_residual(&self, x: &[F], y: &[F]) -> F {
        let (n, d) = (self.ev.n, self.ev.d);
        let c = self.cost(x, y);
        let g = self.grad_x(x, y);
        let gn2 = g[(n - 1) * d..].iter().fold(F::zero(), |acc, v| acc + *v * *v);
        let rhs = c / self.t + self.transport_term(x, y) - gn2 / (F::c(4.0) * self.t) + self.laplacian_xn()
            - F::c(2.0 * (d * n * n) as f64);
        self.dt(x, y) - rhs
    }
}
