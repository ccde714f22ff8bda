//! Exact verification of the closed-form matrix identities.
//!
//! Each identity is polynomial (or Laurent) in `t` with rational coefficients,
//! so checking it at several rational sample times in exact arithmetic
//! certifies it as an identity rather than a numerical coincidence. A failed
//! check is a report entry, never an error.

use num_traits::Signed;
use serde::Serialize;

use super::matrices::{check_order, CostMatrices, TimeMatrices};
use crate::error::KernelError;
use crate::matrix::Matrix;
use crate::scalar::{binomial, falling, ratio, sign_pow, Scalar};
use crate::Rational;

/// Largest order accepted by the exact suite.
pub const MAX_SUITE_ORDER: usize = 12;

/// Sample times used by [`identity_suite`].
pub fn default_sample_times() -> Vec<Rational> {
    vec![ratio(1, 1), ratio(1, 2), ratio(3, 1)]
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    /// Sample time as a reduced fraction, `None` for time-free identities.
    pub t: Option<String>,
    pub passed: bool,
    /// Largest absolute entry of the difference, rounded to `f64`.
    pub max_abs_residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityReport {
    pub n: usize,
    pub checks: Vec<IdentityCheck>,
}

impl IdentityReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &IdentityCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

struct Recorder {
    checks: Vec<IdentityCheck>,
    t: Option<String>,
}

impl Recorder {
    fn zero(&mut self, name: &str, diff: &Matrix<Rational>) {
        self.checks.push(IdentityCheck {
            name: name.to_string(),
            t: self.t.clone(),
            passed: diff.is_zero(),
            max_abs_residual: diff.max_abs(),
        });
    }

    fn equal(&mut self, name: &str, lhs: &Matrix<Rational>, rhs: &Matrix<Rational>) {
        self.zero(name, &(lhs - rhs));
    }

    fn scalar(&mut self, name: &str, lhs: &Rational, rhs: &Rational) {
        let diff = lhs - rhs;
        self.checks.push(IdentityCheck {
            name: name.to_string(),
            t: self.t.clone(),
            passed: diff.is_exact_zero(),
            max_abs_residual: diff.abs().to_f64_lossy(),
        });
    }
}

/// Run every identity for order `n` at the default sample times.
pub fn identity_suite(n: usize) -> Result<IdentityReport, KernelError> {
    check_order(n, MAX_SUITE_ORDER)?;
    let mats = CostMatrices::build(n)?;
    Ok(verify_matrices(&mats, &default_sample_times()))
}

/// Run every identity against caller-supplied matrices.
///
/// Used for fault injection: corrupting a field of `mats` must surface as
/// failed checks.
pub fn verify_matrices(mats: &CostMatrices, times: &[Rational]) -> IdentityReport {
    let n = mats.n;
    let ni = n as i64;
    let eye = Matrix::<Rational>::identity(n);
    let mut rec = Recorder { checks: Vec::new(), t: None };

    rec.equal("b_times_b_inverse", &(&mats.b * &mats.b_inv), &eye);
    rec.equal("lu_product", &(&mats.lu.l * &mats.lu.u), &mats.a);
    rec.equal("l_times_l_inverse", &(&mats.lu.l * &mats.lu.l_inv), &eye);
    rec.equal("u_times_u_inverse", &(&mats.lu.u * &mats.lu.u_inv), &eye);
    rec.equal("a_inverse_from_lu", &(&(&mats.lu.u_inv * &mats.lu.l_inv) * &mats.a), &eye);
    rec.equal("a_b_inverse_closed", &(&mats.a * &mats.b_inv), &mats.m_inv);
    rec.equal("m_times_m_inverse", &(&mats.m * &mats.m_inv), &eye);
    rec.equal("m_symmetric", &mats.m, &mats.m.transpose());
    rec.scalar("m_last_diagonal", &mats.m[(n - 1, n - 1)], &Rational::from_i64(ni * ni));
    rec.checks.push(IdentityCheck {
        name: "m_sym_positive_definite".into(),
        t: None,
        passed: leading_minors_positive(&mats.m_sym()),
        max_abs_residual: 0.0,
    });

    let diag_odd = Matrix::diagonal((0..ni).map(|i| Rational::from_i64(2 * ni - 1 - 2 * i)).collect());
    let t11 = &(&mats.m_inv * &diag_odd) - &mats.h0;
    rec.equal("t11_antisymmetric", &t11, &(-&t11.transpose()));
    let t31_closed = Matrix::from_fn(n, n, |r, c| {
        let (i, j) = (r as i64 + 1, c as i64 + 1);
        Rational::from_i64(i - j)
            / (Rational::from_i64(2 * ni + 1 - i - j)
                * Rational::factorial((ni - i) as u32)
                * Rational::factorial((ni - j) as u32))
    });

    rec.zero("alternating_binomial_sum", &binomial_identity_residual(ni));
    rec.zero("falling_factorial_sum", &falling_sum_residual(ni));

    for t in times {
        rec.t = Some(t.to_string());
        let tm = TimeMatrices::new(n, t.clone());
        let m = &mats.m;
        let h2t = tm.h2.transpose();
        let h1t = tm.h1.transpose();
        let scale = Rational::powi(t, 2 - 2 * ni as i32);
        let odd = Rational::from_i64(2 * ni - 1);
        let two_t = t.clone() * Rational::from_i64(2);

        let h1t_m_h1 = &(&h1t * m) * &tm.h1;
        let h2t_m_h1 = &(&h2t * m) * &tm.h1;
        let h2t_m_h2 = &(&h2t * m) * &tm.h2;
        let h2_d_h2t = &(&tm.h2 * &tm.d) * &h2t;

        let t1 = &(&h1t_m_h1.scale(&odd) - &(&(&tm.h1_dot.transpose() * m) * &tm.h1).scale(&two_t))
            - &(&(&(&h1t * m) * &h2_d_h2t) * &(m * &tm.h1)).scale(&scale);
        rec.equal("t1_antisymmetric", &t1, &(-&t1.transpose()));

        let t2 = &(&(&(&h2t_m_h1.scale(&(-odd.clone()))
            + &(&(&(&tm.h2_dot.transpose() * m) * &tm.h1) + &(&(&h2t * m) * &tm.h1_dot)).scale(t))
            - &(&tm.q * &h2t_m_h1).scale(t))
            + &(&(&(&h2t * m) * &mats.h0) * &(m * &tm.h1)));
        rec.zero("t2_zero", t2);

        let t3 = &(&(&h2t_m_h2.scale(&odd) - &(&(&tm.h2_dot.transpose() * m) * &tm.h2).scale(&two_t))
            + &(&tm.q * &h2t_m_h2).scale(&two_t))
            - &(&(&(&h2t * m) * &h2_d_h2t) * &(m * &tm.h2)).scale(&scale);
        rec.equal("t3_antisymmetric", &t3, &(-&t3.transpose()));

        let trace = (&tm.d * &h2t_m_h2).trace();
        rec.scalar("trace_d_h2t_m_h2", &trace, &(Rational::from_i64(ni * ni) * Rational::powu(t, 2 * (n as u32 - 1))));

        rec.equal("h2_times_h_is_h1", &(&tm.h2 * &tm.h_closed()), &tm.h1);
        let k_inv = h2t_m_h1.scale(&scale);
        rec.equal("k_closed_is_inverse", &(&tm.k_closed() * &k_inv), &eye);
        rec.equal("h2_d_h2t_is_h0", &h2_d_h2t, &mats.h0.scale(&Rational::powu(t, 2 * (n as u32 - 1))));

        let p = tm.h2t_inverse_closed();
        rec.equal("h2t_inverse_closed", &(&p * &h2t), &eye);
        let relation =
            &(&eye.scale(&odd) - &(&p * &tm.h2_dot.transpose()).scale(&two_t)) + &(&(&p * &tm.q) * &h2t).scale(&two_t);
        rec.equal("diag_relation", &relation, &diag_odd);
        rec.equal("t31_closed_form", &(&(&mats.m_inv * &relation) - &mats.h0), &t31_closed);
    }

    IdentityReport { n, checks: rec.checks }
}

/// Sylvester's criterion in exact arithmetic.
fn leading_minors_positive(m: &Matrix<Rational>) -> bool {
    let n = m.rows();
    (1..=n).all(|k| {
        let sub = Matrix::from_fn(k, k, |i, j| m[(i, j)].clone());
        sub.det() > Rational::from_i64(0)
    })
}

/// `sum_{j<=k} C(n,j)(-1)^j - (-1)^k C(n-1,k)` for every `k < n`, as a row.
fn binomial_identity_residual(n: i64) -> Matrix<Rational> {
    Matrix::from_fn(1, n as usize, |_, k| {
        let k = k as i64;
        let lhs =
            (0..=k).fold(Rational::from_i64(0), |acc, j| acc + binomial::<Rational>(n, j) * sign_pow::<Rational>(j));
        lhs - sign_pow::<Rational>(k) * binomial::<Rational>(n - 1, k)
    })
}

/// Residual of
/// `sum_{i=1}^{j} (-1)^{i+j}/((i-1)!(j-i)!) (n+i-1)!/(n+i-k)! = C(k-1,j-1) n!/(n-(k-j))!`
/// over `1 <= j <= k <= 2n` with `k - j <= n`. The factorial ratios are
/// falling factorials so that terms with `n+i-k < 0` vanish.
fn falling_sum_residual(n: i64) -> Matrix<Rational> {
    let size = (2 * n) as usize;
    Matrix::from_fn(size, size, |kr, jr| {
        let (k, j) = (kr as i64 + 1, jr as i64 + 1);
        if j > k || k - j > n {
            return Rational::from_i64(0);
        }
        let lhs = (1..=j).fold(Rational::from_i64(0), |acc, i| {
            acc + sign_pow::<Rational>(i + j) * falling::<Rational>(n + i - 1, k - 1)
                / (Rational::factorial((i - 1) as u32) * Rational::factorial((j - i) as u32))
        });
        lhs - binomial::<Rational>(k - 1, j - 1) * falling::<Rational>(n, k - j)
    })
}
