//! Mean-squared-derivative cost: exact combinatorial matrices, the floating
//! evaluator, and the exact identity suite.

mod evaluator;
mod identities;
mod matrices;

pub use evaluator::{BoundaryState, CostAt, CostEvaluator};
pub use identities::{
    default_sample_times, identity_suite, verify_matrices, IdentityCheck, IdentityReport, MAX_SUITE_ORDER,
};
pub use matrices::{
    build_a, build_b, build_b_inverse_closed, build_h0, build_lu, build_m, build_m_inverse_closed, CostMatrices,
    LuFactors, TimeMatrices, MAX_ORDER,
};

/// Comparability constant of [`CostEvaluator::comparability_constant`] for a fresh evaluator.
pub fn comparability_constant(n: usize, d: usize, t_max: f64) -> Result<f64, crate::KernelError> {
    CostEvaluator::<f64>::new(n, d)?.comparability_constant(t_max)
}
