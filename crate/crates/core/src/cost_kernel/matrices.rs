//! Closed-form combinatorial matrices of order `n`.
//!
//! Every builder is generic over [`Scalar`]. With [`Rational`] the entries are
//! exact; factorials are formed by integer products inside the scalar type, so
//! no floating value ever enters an exact path. Indices in the comments are
//! one-based to match the usual statement of the formulas.

use crate::error::KernelError;
use crate::matrix::Matrix;
use crate::scalar::{binomial, falling, sign_pow, Scalar};
use crate::Rational;

/// Largest order accepted by the builders.
pub const MAX_ORDER: usize = 64;

pub(crate) fn check_order(n: usize, max: usize) -> Result<(), KernelError> {
    if n == 0 || n > max {
        Err(KernelError::OrderOutOfRange { n, max })
    } else {
        Ok(())
    }
}

fn fact<T: Scalar>(k: i64) -> T {
    debug_assert!(k >= 0);
    T::factorial(k as u32)
}

/// `A_{k+1,i} = k! C(n+i-1, k)`: row `k` holds the `k`-th falling factorials of `n..2n-1`.
pub fn build_a<T: Scalar>(n: usize) -> Result<Matrix<T>, KernelError> {
    check_order(n, MAX_ORDER)?;
    let ni = n as i64;
    Ok(Matrix::from_fn(n, n, |r, c| falling(ni + c as i64, r as i64)))
}

/// `B_{ki} = (-1)^{n-k} (n+i-1)!/(k+i-n-1)!` when `k+i >= n+1`, zero otherwise.
pub fn build_b<T: Scalar>(n: usize) -> Result<Matrix<T>, KernelError> {
    check_order(n, MAX_ORDER)?;
    let ni = n as i64;
    Ok(Matrix::from_fn(n, n, |r, c| {
        let (k, i) = (r as i64 + 1, c as i64 + 1);
        if k + i < ni + 1 {
            T::zero()
        } else {
            sign_pow::<T>(ni - k) * falling(ni + i - 1, 2 * ni - k)
        }
    }))
}

/// Closed-form inverse of `B`:
/// `(-1)^{k-1} / ((n+k-1)! (n+1-k-i)!)` when `k+i <= n+1`, zero otherwise.
pub fn build_b_inverse_closed<T: Scalar>(n: usize) -> Result<Matrix<T>, KernelError> {
    check_order(n, MAX_ORDER)?;
    let ni = n as i64;
    Ok(Matrix::from_fn(n, n, |r, c| {
        let (k, i) = (r as i64 + 1, c as i64 + 1);
        if k + i > ni + 1 {
            T::zero()
        } else {
            sign_pow::<T>(k - 1) / (fact::<T>(ni + k - 1) * fact::<T>(ni + 1 - k - i))
        }
    }))
}

/// Triangular factors of `A` and their closed-form inverses.
#[derive(Clone, Debug)]
pub struct LuFactors<T: Scalar> {
    pub l: Matrix<T>,
    pub u: Matrix<T>,
    pub l_inv: Matrix<T>,
    pub u_inv: Matrix<T>,
}

/// `A = L U` with
/// `U_{ij} = (j-1)!/(j-i)!`, `L_{kj} = C(k-1, j-1) n!/(n-k+j)!`,
/// `U^{-1}_{ij} = (-1)^{i+j}/((i-1)!(j-i)!)`,
/// `L^{-1}_{ji} = (-1)^{j-i} (j-1)!/(i-1)! C(n+j-i-1, j-i)`.
pub fn build_lu<T: Scalar>(n: usize) -> Result<LuFactors<T>, KernelError> {
    check_order(n, MAX_ORDER)?;
    let ni = n as i64;
    let u = Matrix::from_fn(n, n, |r, c| {
        let (i, j) = (r as i64 + 1, c as i64 + 1);
        if j < i {
            T::zero()
        } else {
            falling(j - 1, i - 1)
        }
    });
    let l = Matrix::from_fn(n, n, |r, c| {
        let (k, j) = (r as i64 + 1, c as i64 + 1);
        if j > k {
            T::zero()
        } else {
            binomial::<T>(k - 1, j - 1) * falling(ni, k - j)
        }
    });
    let u_inv = Matrix::from_fn(n, n, |r, c| {
        let (i, j) = (r as i64 + 1, c as i64 + 1);
        if j < i {
            T::zero()
        } else {
            sign_pow::<T>(i + j) / (fact::<T>(i - 1) * fact::<T>(j - i))
        }
    });
    let l_inv = Matrix::from_fn(n, n, |r, c| {
        let (j, i) = (r as i64 + 1, c as i64 + 1);
        if j < i {
            T::zero()
        } else {
            sign_pow::<T>(j - i) * falling(j - 1, j - i) * binomial::<T>(ni + j - i - 1, j - i)
        }
    });
    Ok(LuFactors { l, u, l_inv, u_inv })
}

/// `M = B A^{-1} = B U^{-1} L^{-1}`.
pub fn build_m<T: Scalar>(n: usize) -> Result<Matrix<T>, KernelError> {
    let b = build_b::<T>(n)?;
    let lu = build_lu::<T>(n)?;
    Ok(&(&b * &lu.u_inv) * &lu.l_inv)
}

/// Closed form of `M^{-1} = A B^{-1}`: `1/((2n+1-i-j)(n-i)!(n-j)!)`.
pub fn build_m_inverse_closed<T: Scalar>(n: usize) -> Result<Matrix<T>, KernelError> {
    check_order(n, MAX_ORDER)?;
    let ni = n as i64;
    Ok(Matrix::from_fn(n, n, |r, c| {
        let (i, j) = (r as i64 + 1, c as i64 + 1);
        T::one() / (T::from_i64(2 * ni + 1 - i - j) * fact::<T>(ni - i) * fact::<T>(ni - j))
    }))
}

/// `H_0 = (1/((n-i)!(n-j)!))_{ij}`.
pub fn build_h0<T: Scalar>(n: usize) -> Matrix<T> {
    let ni = n as i64;
    Matrix::from_fn(n, n, |r, c| T::one() / (fact::<T>(ni - 1 - r as i64) * fact::<T>(ni - 1 - c as i64)))
}

/// All exact matrices of one order.
#[derive(Clone, Debug)]
pub struct CostMatrices {
    pub n: usize,
    pub a: Matrix<Rational>,
    pub b: Matrix<Rational>,
    pub b_inv: Matrix<Rational>,
    pub lu: LuFactors<Rational>,
    pub m: Matrix<Rational>,
    pub m_inv: Matrix<Rational>,
    pub h0: Matrix<Rational>,
}

impl CostMatrices {
    pub fn build(n: usize) -> Result<Self, KernelError> {
        let lu = build_lu(n)?;
        let b = build_b(n)?;
        let m = &(&b * &lu.u_inv) * &lu.l_inv;
        Ok(Self {
            n,
            a: build_a(n)?,
            b_inv: build_b_inverse_closed(n)?,
            b,
            lu,
            m,
            m_inv: build_m_inverse_closed(n)?,
            h0: build_h0(n),
        })
    }

    /// Symmetric part `(M + M^T)/2`.
    pub fn m_sym(&self) -> Matrix<Rational> {
        let half = crate::scalar::ratio(1, 2);
        (&self.m + &self.m.transpose()).scale(&half)
    }
}

/// Time-dependent matrices evaluated at one sample time.
#[derive(Clone, Debug)]
pub struct TimeMatrices<T: Scalar> {
    pub t: T,
    /// `diag(1, t, ..., t^{n-1})`.
    pub h1: Matrix<T>,
    /// `d/dt h1`.
    pub h1_dot: Matrix<T>,
    /// Upper triangular, `t^{j-1}/(j-i)!`.
    pub h2: Matrix<T>,
    /// `d/dt h2`.
    pub h2_dot: Matrix<T>,
    /// Ones on the subdiagonal.
    pub q: Matrix<T>,
    /// `diag(0, ..., 0, 1)`.
    pub d: Matrix<T>,
}

impl<T: Scalar> TimeMatrices<T> {
    pub fn new(n: usize, t: T) -> Self {
        let pow = |e: i64| -> T {
            if e < 0 {
                T::zero()
            } else {
                T::powu(&t, e as u32)
            }
        };
        let h1 = Matrix::diagonal((0..n).map(|i| pow(i as i64)).collect());
        let h1_dot = Matrix::diagonal((0..n).map(|i| T::from_i64(i as i64) * pow(i as i64 - 1)).collect());
        let h2 =
            Matrix::from_fn(n, n, |r, c| if c < r { T::zero() } else { pow(c as i64) / fact::<T>((c - r) as i64) });
        let h2_dot = Matrix::from_fn(n, n, |r, c| {
            if c < r || c == 0 {
                T::zero()
            } else {
                T::from_i64(c as i64) * pow(c as i64 - 1) / fact::<T>((c - r) as i64)
            }
        });
        let q = Matrix::from_fn(n, n, |r, c| if r == c + 1 { T::one() } else { T::zero() });
        let d = Matrix::from_fn(n, n, |r, c| if r == c && r + 1 == n { T::one() } else { T::zero() });
        Self { t, h1, h1_dot, h2, h2_dot, q, d }
    }

    pub fn n(&self) -> usize {
        self.h1.rows()
    }

    /// Closed form of `H_2^{-1} H_1`: `(-1)^{j-i} t^{j-i}/(j-i)!`.
    pub fn h_closed(&self) -> Matrix<T> {
        let n = self.n();
        Matrix::from_fn(n, n, |r, c| {
            if c < r {
                T::zero()
            } else {
                let k = (c - r) as i64;
                sign_pow::<T>(k) * T::powu(&self.t, k as u32) / fact::<T>(k)
            }
        })
    }

    /// Closed form of `t^{2n-2} (H_2^T M H_1)^{-1}`:
    /// `(-1)^{n-j} t^{2n-i-j}/(2n-i-j+1)!`.
    pub fn k_closed(&self) -> Matrix<T> {
        let n = self.n() as i64;
        Matrix::from_fn(n as usize, n as usize, |r, c| {
            let (i, j) = (r as i64 + 1, c as i64 + 1);
            let e = 2 * n - i - j;
            sign_pow::<T>(n - j) * T::powu(&self.t, e as u32) / fact::<T>(e + 1)
        })
    }

    /// Closed form of `(H_2^T)^{-1}`: `(-1)^{l-j}/((l-j)! t^{j-1})` for `l >= j`.
    pub fn h2t_inverse_closed(&self) -> Matrix<T> {
        let n = self.n();
        Matrix::from_fn(n, n, |l, j| {
            if l < j {
                T::zero()
            } else {
                let k = (l - j) as i64;
                sign_pow::<T>(k) / (fact::<T>(k) * T::powu(&self.t, j as u32))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::ratio;

    fn ints(rows: &[&[i64]]) -> Matrix<Rational> {
        Matrix::from_rows(rows.iter().map(|r| r.iter().map(|&v| ratio(v, 1)).collect()).collect())
    }

    #[test]
    fn small_orders_by_hand() {
        assert_eq!(build_a::<Rational>(1).unwrap(), ints(&[&[1]]));
        assert_eq!(build_a::<Rational>(2).unwrap(), ints(&[&[1, 1], &[2, 3]]));
        assert_eq!(build_a::<Rational>(3).unwrap(), ints(&[&[1, 1, 1], &[3, 4, 5], &[6, 12, 20]]));
        assert_eq!(build_b::<Rational>(1).unwrap(), ints(&[&[1]]));
        assert_eq!(build_b::<Rational>(2).unwrap(), ints(&[&[0, -6], &[2, 6]]));
        assert_eq!(build_m::<Rational>(1).unwrap(), ints(&[&[1]]));
        assert_eq!(build_m::<Rational>(2).unwrap(), ints(&[&[12, -6], &[-6, 4]]));
    }

    #[test]
    fn b_inverse_n2() {
        let expect = Matrix::from_rows(vec![vec![ratio(1, 2), ratio(1, 2)], vec![ratio(-1, 6), ratio(0, 1)]]);
        assert_eq!(build_b_inverse_closed::<Rational>(2).unwrap(), expect);
    }

    #[test]
    fn lu_n2() {
        let lu = build_lu::<Rational>(2).unwrap();
        assert_eq!(lu.u, ints(&[&[1, 1], &[0, 1]]));
        assert_eq!(lu.l, ints(&[&[1, 0], &[2, 1]]));
        assert_eq!(&lu.l * &lu.u, ints(&[&[1, 1], &[2, 3]]));
    }

    #[test]
    fn zero_block_of_b() {
        for n in 1..=9 {
            let b = build_b::<Rational>(n).unwrap();
            for r in 0..n {
                for c in 0..n {
                    if r + c + 2 < n + 1 {
                        assert_eq!(b[(r, c)], ratio(0, 1));
                    }
                }
            }
        }
    }

    #[test]
    fn order_range_checked() {
        assert!(matches!(build_a::<f64>(0), Err(KernelError::OrderOutOfRange { .. })));
        assert!(matches!(build_b::<f64>(65), Err(KernelError::OrderOutOfRange { .. })));
        assert!(build_a::<f64>(64).is_ok());
    }

    #[test]
    fn float_builders_agree_with_exact() {
        let exact = build_m::<Rational>(4).unwrap();
        let float = build_m::<f64>(4).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let e = exact[(r, c)].to_f64_lossy();
                assert!((e - float[(r, c)]).abs() <= 1e-9 * e.abs().max(1.0));
            }
        }
    }
}
