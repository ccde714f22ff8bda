use std::path::Path;

use anyhow::Result;
use clap::Args;
use kolmogorov_jko::cost_kernel::{
    default_sample_times, identity_suite, verify_matrices, CostMatrices, IdentityCheck, MAX_SUITE_ORDER,
};
use kolmogorov_jko::matrix::Matrix;
use kolmogorov_jko::scalar::ratio;
use kolmogorov_jko::Rational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::{output, usage, Verdict};

#[derive(Debug, Args)]
pub struct IdentitiesArgs {
    /// Largest order to check.
    #[arg(long, default_value_t = 6)]
    n_max: usize,
    /// Corrupt one matrix entry per order and require the suite to notice.
    #[arg(long)]
    self_test: bool,
}

#[derive(Serialize)]
struct OrderSummary {
    n: usize,
    checks: usize,
    passed: bool,
    failures: Vec<IdentityCheck>,
}

#[derive(Serialize)]
struct SuiteReport {
    n_max: usize,
    all_passed: bool,
    orders: Vec<OrderSummary>,
}

#[derive(Serialize)]
struct Injection {
    n: usize,
    matrix: &'static str,
    row: usize,
    col: usize,
    detected: bool,
    failed_checks: Vec<String>,
}

#[derive(Serialize)]
struct SelfTestReport {
    n_max: usize,
    seed: u64,
    all_detected: bool,
    injections: Vec<Injection>,
}

const TARGETS: [&str; 7] = ["a", "b_inv", "lu.l", "lu.u", "m", "m_inv", "h0"];

fn target_mut<'a>(mats: &'a mut CostMatrices, name: &str) -> &'a mut Matrix<Rational> {
    match name {
        "a" => &mut mats.a,
        "b_inv" => &mut mats.b_inv,
        "lu.l" => &mut mats.lu.l,
        "lu.u" => &mut mats.lu.u,
        "m" => &mut mats.m,
        "m_inv" => &mut mats.m_inv,
        "h0" => &mut mats.h0,
        _ => unreachable!("fixed target list"),
    }
}

pub fn run(args: &IdentitiesArgs, seed: u64, out_dir: Option<&Path>) -> Result<Verdict> {
    if args.n_max == 0 || args.n_max > MAX_SUITE_ORDER {
        return Err(usage(format!("--n-max must lie in 1..={MAX_SUITE_ORDER}, got {}", args.n_max)));
    }
    if args.self_test {
        return self_test(args.n_max, seed, out_dir);
    }
    let mut orders = Vec::with_capacity(args.n_max);
    for n in 1..=args.n_max {
        let report = identity_suite(n)?;
        orders.push(OrderSummary {
            n,
            checks: report.checks.len(),
            passed: report.all_passed(),
            failures: report.failures().cloned().collect(),
        });
    }
    let all_passed = orders.iter().all(|o| o.passed);
    output::emit(&SuiteReport { n_max: args.n_max, all_passed, orders }, out_dir, "identities.json")?;
    Ok(Verdict::from_bool(all_passed))
}

fn self_test(n_max: usize, seed: u64, out_dir: Option<&Path>) -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let times = default_sample_times();
    let mut injections = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let mut mats = CostMatrices::build(n)?;
        let matrix = TARGETS[rng.random_range(0..TARGETS.len())];
        let (row, col) = (rng.random_range(0..n), rng.random_range(0..n));
        let m = target_mut(&mut mats, matrix);
        m[(row, col)] = m[(row, col)].clone() + ratio(1, 7);
        let report = verify_matrices(&mats, &times);
        let mut failed_checks: Vec<String> = Vec::new();
        for c in report.failures() {
            if !failed_checks.contains(&c.name) {
                failed_checks.push(c.name.clone());
            }
        }
        injections.push(Injection { n, matrix, row, col, detected: !failed_checks.is_empty(), failed_checks });
    }
    let all_detected = injections.iter().all(|i| i.detected);
    output::emit(&SelfTestReport { n_max, seed, all_detected, injections }, out_dir, "identities_self_test.json")?;
    Ok(Verdict::from_bool(all_detected))
}
