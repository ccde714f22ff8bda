//! Small dense row-major matrices over any [`Scalar`].
//!
//! Sizes here are at most a few dozen, so clarity wins over blocking tricks.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use crate::error::KernelError;
use crate::scalar::Scalar;

#[derive(Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
    }

    /// Build from a closure over zero-based `(row, col)`.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self { rows: r, cols: c, data: rows.into_iter().flatten().collect() }
    }

    pub fn diagonal(values: Vec<T>) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in values.into_iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].clone())
    }

    pub fn scale(&self, s: &T) -> Self {
        self.map(|v| v.clone() * s.clone())
    }

    pub fn map<U: Scalar>(&self, mut f: impl FnMut(&T) -> U) -> Matrix<U> {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(&mut f).collect() }
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).fold(T::zero(), |acc, i| acc + self[(i, i)].clone())
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(Scalar::is_exact_zero)
    }

    pub fn is_symmetric(&self) -> bool {
        self.is_square() && *self == self.transpose()
    }

    /// Largest absolute entry, as `f64`.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.abs().to_f64_lossy()).fold(0.0, f64::max)
    }

    /// `self * v` for a column vector.
    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols, "vector length");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).fold(T::zero(), |acc, (a, b)| acc + a.clone() * b.clone()))
            .collect()
    }

    /// Gauss-Jordan inverse with largest-magnitude pivoting.
    ///
    /// Over the rationals the pivot choice only matters for speed; over floats
    /// it is ordinary partial pivoting.
    pub fn inverse(&self) -> Result<Self, KernelError> {
        if !self.is_square() {
            return Err(KernelError::Singular);
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        for col in 0..n {
            let pivot = (col..n)
                .filter(|&r| !a[(r, col)].is_exact_zero())
                .max_by(|&r, &s| a[(r, col)].abs().partial_cmp(&a[(s, col)].abs()).unwrap_or(std::cmp::Ordering::Equal))
                .ok_or(KernelError::Singular)?;
            a.swap_rows(col, pivot);
            inv.swap_rows(col, pivot);
            let p = a[(col, col)].clone();
            for j in 0..n {
                a[(col, j)] = a[(col, j)].clone() / p.clone();
                inv[(col, j)] = inv[(col, j)].clone() / p.clone();
            }
            for r in 0..n {
                if r == col || a[(r, col)].is_exact_zero() {
                    continue;
                }
                let f = a[(r, col)].clone();
                for j in 0..n {
                    let da = f.clone() * a[(col, j)].clone();
                    a[(r, j)] = a[(r, j)].clone() - da;
                    let di = f.clone() * inv[(col, j)].clone();
                    inv[(r, j)] = inv[(r, j)].clone() - di;
                }
            }
        }
        Ok(inv)
    }

    /// Determinant by Gaussian elimination.
    pub fn det(&self) -> T {
        assert!(self.is_square(), "determinant of non-square matrix");
        let n = self.rows;
        let mut a = self.clone();
        let mut det = T::one();
        for col in 0..n {
            let Some(pivot) = (col..n).find(|&r| !a[(r, col)].is_exact_zero()) else {
                return T::zero();
            };
            if pivot != col {
                a.swap_rows(col, pivot);
                det = -det;
            }
            let p = a[(col, col)].clone();
            det = det * p.clone();
            for r in col + 1..n {
                if a[(r, col)].is_exact_zero() {
                    continue;
                }
                let f = a[(r, col)].clone() / p.clone();
                for j in col..n {
                    let d = f.clone() * a[(col, j)].clone();
                    a[(r, j)] = a[(r, j)].clone() - d;
                }
            }
        }
        det
    }

    fn swap_rows(&mut self, r: usize, s: usize) {
        if r == s {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(r * self.cols + j, s * self.cols + j);
        }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Scalar> Mul for &Matrix<T> {
    type Output = Matrix<T>;
    fn mul(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.cols, rhs.rows, "inner dimensions");
        let mut out = Matrix::<T>::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(i, k)];
                if a.is_exact_zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    let prod = a.clone() * rhs[(k, j)].clone();
                    out[(i, j)] = out[(i, j)].clone() + prod;
                }
            }
        }
        out
    }
}

impl<T: Scalar> Add for &Matrix<T> {
    type Output = Matrix<T>;
    fn add(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape");
        Matrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)].clone() + rhs[(i, j)].clone())
    }
}

impl<T: Scalar> Sub for &Matrix<T> {
    type Output = Matrix<T>;
    fn sub(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape");
        Matrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)].clone() - rhs[(i, j)].clone())
    }
}

impl<T: Scalar> Neg for &Matrix<T> {
    type Output = Matrix<T>;
    fn neg(self) -> Matrix<T> {
        self.map(|v| -v.clone())
    }
}

impl<T: fmt::Debug> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            let row: Vec<String> =
                self.data[i * self.cols..(i + 1) * self.cols].iter().map(|v| format!("{v:?}")).collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::ratio;
    use crate::Rational;

    fn rat(rows: &[&[i64]]) -> Matrix<Rational> {
        Matrix::from_rows(rows.iter().map(|r| r.iter().map(|&v| ratio(v, 1)).collect()).collect())
    }

    #[test]
    fn exact_inverse_roundtrip() {
        let a = rat(&[&[0, -6], &[2, 6]]);
        let inv = a.inverse().unwrap();
        assert_eq!(inv, Matrix::from_rows(vec![vec![ratio(1, 2), ratio(1, 2)], vec![ratio(-1, 6), ratio(0, 1)],]));
        assert_eq!(&a * &inv, Matrix::identity(2));
    }

    #[test]
    fn determinant_with_row_swap() {
        let a = rat(&[&[0, 1, 2], &[1, 0, 3], &[4, -3, 8]]);
        assert_eq!(a.det(), ratio(-2, 1));
    }

    #[test]
    fn singular_is_reported() {
        let a = rat(&[&[1, 2], &[2, 4]]);
        assert!(matches!(a.inverse(), Err(KernelError::Singular)));
        assert_eq!(a.det(), ratio(0, 1));
    }
}
