//! Built-in oracle battery: constant, attainable and closed-form cases.

use entropic_pricer_core::bsde::{cole_hopf_oracle, solve_pde_fd, solve_regression_mc, BsdeSolution};
use entropic_pricer_core::market_paths::simulate;
use entropic_pricer_core::quadrature::QuadConfig;
use entropic_pricer_core::{
    Claim, ConvexIntegrand, MarketParams, McConfig, PdeConfig, Result, SolverMethod, TimeGrid, W2Payoff,
};
use serde::{Deserialize, Serialize};

pub const SELFCHECK_PATHS: usize = 50_000;
pub const SELFCHECK_STEPS: usize = 25;

const TOL_CONSTANT: f64 = 1e-10;
const TOL_ATTAINABLE_MC: f64 = 0.03;
const TOL_ORACLE_MC: f64 = 0.02;
const TOL_PDE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub case: String,
    pub method: SolverMethod,
    #[serde(rename = "F")]
    pub f: f64,
    pub stderr: f64,
    pub oracle: f64,
    pub error: f64,
    pub tolerance: f64,
    pub energy_holds: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfcheckReport {
    pub seed: u64,
    pub paths: usize,
    pub steps: usize,
    pub rows: Vec<Row>,
    pub passed: bool,
}

impl SelfcheckReport {
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<34} {:<13} {:>14} {:>14} {:>10} {:>9}  {}\n",
            "case", "method", "F", "oracle", "error", "tol", "result"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<34} {:<13} {:>14.8} {:>14.8} {:>10.2e} {:>9.1e}  {}\n",
                r.case,
                r.method.to_string(),
                r.f,
                r.oracle,
                r.error,
                r.tolerance,
                if r.passed { "pass" } else { "FAIL" }
            ));
        }
        out
    }
}

struct Case {
    name: String,
    claim: Claim,
    k: f64,
    lambda: f64,
    oracle: f64,
    tol_mc: f64,
    tol_pde: f64,
}

fn row(case: &Case, sol: &BsdeSolution, tol: f64) -> Row {
    let error = (sol.y0 - case.oracle).abs();
    let energy_holds = sol.diagnostics.energy.holds;
    Row {
        case: case.name.clone(),
        method: sol.method,
        f: sol.y0,
        stderr: sol.stderr,
        oracle: case.oracle,
        error,
        tolerance: tol,
        energy_holds,
        passed: error <= tol && energy_holds,
    }
}

fn battery() -> Result<Vec<Case>> {
    let quad = QuadConfig::default();
    let mut cases = Vec::new();
    for c in [-2.0, 3.0] {
        cases.push(Case {
            name: format!("constant({c})"),
            claim: Claim::constant(c)?,
            k: 1.0,
            lambda: 0.2,
            oracle: c,
            tol_mc: TOL_CONSTANT,
            tol_pde: TOL_CONSTANT,
        });
    }
    for v0 in [-3.0, 3.0] {
        let params = MarketParams::scalar(0.0, 0.2)?;
        cases.push(Case {
            name: format!("attainable(v0={v0};H=1;lambda=0.2)"),
            claim: Claim::attainable(v0, vec![1.0], &params, 1.0)?,
            k: 1.0,
            lambda: 0.2,
            oracle: v0,
            tol_mc: TOL_ATTAINABLE_MC,
            tol_pde: TOL_PDE,
        });
    }
    for (name, payoff, k) in [
        ("identity(k=1)", W2Payoff::Identity, 1.0),
        ("identity(k=2)", W2Payoff::Identity, 2.0),
        ("capped_square(cap=4;k=0.25)", W2Payoff::CappedSquare { cap: 4.0 }, 0.25),
    ] {
        let claim = Claim::terminal_w2(payoff, 1.0)?;
        let oracle = cole_hopf_oracle(|w| payoff.eval(w), &claim.w2_breakpoints(), k, 1.0, &quad)?;
        cases.push(Case {
            name: name.to_string(),
            claim,
            k,
            lambda: 0.0,
            oracle,
            tol_mc: TOL_ORACLE_MC,
            tol_pde: TOL_PDE,
        });
    }
    Ok(cases)
}

/// Runs every battery case with regression Monte Carlo (one bundle per
/// market, drawn from `seed`) and the finite-difference solver.
pub fn run_selfcheck(seed: u64) -> Result<SelfcheckReport> {
    let grid = TimeGrid::new(1.0, SELFCHECK_STEPS)?;
    let cases = battery()?;
    let mut rows = Vec::new();
    let mut bundles: Vec<(u64, entropic_pricer_core::PathBundle)> = Vec::new();
    for case in &cases {
        let params = MarketParams::scalar(0.0, case.lambda)?;
        let key = case.lambda.to_bits();
        if !bundles.iter().any(|(k, _)| *k == key) {
            bundles.push((key, simulate(&params, grid, SELFCHECK_PATHS, seed)?));
        }
        let bundle = &bundles.iter().find(|(k, _)| *k == key).expect("bundle present").1;
        let rho = ConvexIntegrand::quadratic(case.k, case.k, 1)?;
        let mc = solve_regression_mc(&case.claim, &rho, &params, bundle, &McConfig::default())?;
        rows.push(row(case, &mc, case.tol_mc));
        let fd = solve_pde_fd(&case.claim, &rho, &params, grid, &PdeConfig::default())?;
        rows.push(row(case, &fd, case.tol_pde));
    }
    let passed = rows.iter().all(|r| r.passed);
    Ok(SelfcheckReport {
        seed,
        paths: SELFCHECK_PATHS,
        steps: SELFCHECK_STEPS,
        rows,
        passed,
    })
}
