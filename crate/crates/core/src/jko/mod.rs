//! Minimizing-movement scheme on a fixed tensor grid.
//!
//! Each step minimizes `W_h(rho_prev, rho) / (2h) + F(rho)` with
//! `F(rho) = int (V(x_n) + log rho) rho`. The transport term uses the
//! entropic surrogate of [`step`]; the monitors in [`scheme`] and the
//! diagnostics in [`diagnostics`] measure how far the discrete iterates are
//! from the continuous statements.

pub mod diagnostics;
pub mod potential;
pub mod scheme;
pub mod step;

pub use diagnostics::{
    convergence_report, euler_lagrange_residual, final_step_residual, Bump, Constant, ConvergenceReport,
    ConvergenceRow, ElResidual, Reference, TestFunction,
};
pub use potential::{free_energy, FreeEnergy, PotentialKind, PotentialSpec};
pub use scheme::{
    equicontinuity_monitor, equicontinuity_pair, interpolate, run_scheme, step_count, EquicontinuityRow,
    EquicontinuityTable, Problem, SchemeState, StepRecord, TransportCostSource,
};
pub use step::{jko_step, JkoConfig, StepOperator, StepResult};
