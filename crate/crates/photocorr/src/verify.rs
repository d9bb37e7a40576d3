//! Self-check suites runnable from the command line: each suite evaluates
//! a handful of physics identities or statistical consistency checks and
//! reports measured value, expected value, and tolerance per check.

use serde::Serialize;

use crate::detection::{estimate_g2_hbt, simulate_network, NetworkSpec};
use crate::fock::{make_state, StateKind};
use crate::homodyne::{simulate_moments, HomodyneState};
use crate::moments::moments_from_statistics;
use crate::{Error, Result};

/// Outcome of one verification check.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckResult {
    fn new(name: impl Into<String>, measured: f64, expected: f64, tolerance: f64) -> Self {
        let pass = (measured - expected).abs() <= tolerance;
        Self { name: name.into(), measured, expected, tolerance, pass }
    }

    /// One aligned report line, `PASS`/`FAIL` first.
    pub fn render(&self) -> String {
        format!(
            "{} {:<55} measured {:>14.9} expected {:>14.9} tol {:.3e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.expected,
            self.tolerance,
        )
    }
}

/// Names understood by [`run_suite`].
pub const SUITES: &[&str] = &["analytic-moments", "hbt-invariance", "table1-fast"];

/// Run one named suite; "all" chains every suite.
pub fn run_suite(name: &str) -> Result<Vec<CheckResult>> {
    match name {
        "analytic-moments" => Ok(analytic_moments()),
        "hbt-invariance" => Ok(hbt_invariance()),
        "table1-fast" => Ok(table1_fast()),
        "all" => {
            let mut all = analytic_moments();
            all.extend(hbt_invariance());
            all.extend(table1_fast());
            Ok(all)
        }
        other => Err(Error::invalid("suite", format!("unknown suite {other:?}"))),
    }
}

fn analytic_moments() -> Vec<CheckResult> {
    let mut checks = Vec::new();
    let thermal = make_state(StateKind::Thermal { mean: 0.7 }, 60).unwrap();
    let report = moments_from_statistics(&thermal, 5).unwrap();
    for m in 2..=5 {
        let factorial: f64 = (1..=m).map(|i| i as f64).product();
        checks.push(CheckResult::new(
            format!("thermal g^({m}) = {m}!"),
            report.g(m).unwrap(),
            factorial,
            1e-12 * factorial,
        ));
    }
    let poisson = make_state(StateKind::Poisson { mean: 1.3 }, 40).unwrap();
    let report = moments_from_statistics(&poisson, 5).unwrap();
    for m in 2..=5 {
        checks.push(CheckResult::new(
            format!("poisson g^({m}) = 1"),
            report.g(m).unwrap(),
            1.0,
            1e-12,
        ));
    }
    for (k, m, expected) in [(2usize, 2usize, 0.5), (1, 2, 0.0), (4, 3, 0.375)] {
        let fock = make_state(StateKind::Fock { k }, 8).unwrap();
        let report = moments_from_statistics(&fock, m).unwrap();
        checks.push(CheckResult::new(
            format!("fock k={k} g^({m})"),
            report.g(m).unwrap(),
            expected,
            1e-12,
        ));
    }
    checks
}

fn hbt_invariance() -> Vec<CheckResult> {
    let input = make_state(StateKind::Thermal { mean: 0.05 }, 60).unwrap();
    let trials = 2_000_000;
    let balanced = NetworkSpec::hbt(0.5, 0.3, 0.3).unwrap();
    let skewed = NetworkSpec::hbt(0.7, 0.1, 0.9).unwrap();
    let a = estimate_g2_hbt(&simulate_network(&input, &balanced, trials, 101).unwrap()).unwrap();
    let b = estimate_g2_hbt(&simulate_network(&input, &skewed, trials, 202).unwrap()).unwrap();
    vec![
        CheckResult::new("hbt balanced g^(2) = 2", a.value, 2.0, 3.0 * a.std_error),
        CheckResult::new("hbt skewed g^(2) = 2", b.value, 2.0, 3.0 * b.std_error),
        CheckResult::new(
            "hbt estimates agree across optics",
            a.value - b.value,
            0.0,
            3.0 * (a.std_error.powi(2) + b.std_error.powi(2)).sqrt(),
        ),
    ]
}

fn table1_fast() -> Vec<CheckResult> {
    let mut checks = Vec::new();
    let coherent =
        simulate_moments(HomodyneState::Coherent { mean: 1.0 }, 10, 100_000, 5, 31).unwrap();
    let thermal =
        simulate_moments(HomodyneState::Thermal { mean: 1.0 }, 10, 100_000, 5, 37).unwrap();
    for m in 2..=5 {
        checks.push(CheckResult::new(
            format!("coherent g^({m}) (fast)"),
            coherent.g(m).unwrap(),
            1.0,
            3.0 * coherent.sigma(m).unwrap(),
        ));
    }
    for m in 2..=5 {
        let factorial: f64 = (1..=m).map(|i| i as f64).product();
        checks.push(CheckResult::new(
            format!("thermal g^({m}) (fast)"),
            thermal.g(m).unwrap(),
            factorial,
            3.0 * thermal.sigma(m).unwrap(),
        ));
    }
    checks
}
