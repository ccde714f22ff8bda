//! Mean-squared-derivative optimal transport for degenerate Kolmogorov
//! diffusions.
//!
//! The crate covers four layers:
//!
//! * [`cost_kernel`]: closed-form combinatorial matrices in exact arithmetic,
//!   the cost `C_t(x, y)` with its derivatives, and an exact identity suite.
//! * [`fundamental_solution`]: the Gaussian-type kernel built from the cost,
//!   with finite-difference, normalization and Dirac-limit checks.
//! * [`optimal_transport`]: exact and entropic discrete transport with the
//!   cost as ground cost.
//! * [`jko`]: the minimizing-movement scheme on tensor grids with monitors and
//!   convergence measurement.
//!
//! Matrix builders are generic over [`Scalar`]; the evaluator is generic over
//! [`Real`]. Transport and the scheme run in `f64`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cost_kernel;
pub mod error;
pub mod fundamental_solution;
pub mod grid;
pub mod jko;
pub mod matrix;
pub mod optimal_transport;
pub mod quadrature;
pub mod scalar;

pub use error::{KernelError, MeasureError, SchemeError, TransportError};
pub use scalar::{Real, Scalar};

/// Exact rational scalar.
pub type Rational = num_rational::BigRational;
/// Dense matrix of exact rationals.
pub type RatMatrix = matrix::Matrix<Rational>;
/// Double-precision cost evaluator.
pub type CostEvaluatorF64 = cost_kernel::CostEvaluator<f64>;
/// Single-precision cost evaluator.
pub type CostEvaluatorF32 = cost_kernel::CostEvaluator<f32>;
