//! The pricing functional `F(ξ) = Y₀` and probes of its axioms.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bsde::{
    cole_hopf_solve, solve_pde_fd, solve_regression_mc, BsdeSolution, Diagnostics, McConfig, PdeConfig, SolverMethod,
};
use crate::claims::{Claim, ClaimKind};
use crate::convex_integrand::{sample_grid, ConditionReport, ConvexIntegrand};
use crate::error::{PricerError, Result};
use crate::market_paths::{simulate, MarketParams, PathBundle, TimeGrid};
use crate::quadrature::QuadConfig;

const MODULE: &str = "pricing";

/// Solver tolerances on `F`. Probes comparing two prices allow twice these.
pub const TOL_REGRESSION_MC: f64 = 0.015;
pub const TOL_PDE_FD: f64 = 5e-4;
pub const TOL_COLE_HOPF: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum SolverChoice {
    /// Regression Monte Carlo on a bundle of `paths` paths drawn from `seed`.
    RegressionMc {
        paths: usize,
        seed: u64,
        cfg: McConfig,
    },
    PdeFd(PdeConfig),
    ColeHopf(QuadConfig),
}

impl SolverChoice {
    pub fn method(&self) -> SolverMethod {
        match self {
            SolverChoice::RegressionMc { .. } => SolverMethod::RegressionMc,
            SolverChoice::PdeFd(_) => SolverMethod::PdeFd,
            SolverChoice::ColeHopf(_) => SolverMethod::ColeHopf,
        }
    }

    pub fn tolerance(&self) -> f64 {
        match self {
            SolverChoice::RegressionMc { .. } => TOL_REGRESSION_MC,
            SolverChoice::PdeFd(_) => TOL_PDE_FD,
            SolverChoice::ColeHopf(_) => TOL_COLE_HOPF,
        }
    }
}

/// Outcome of one axiom probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub name: String,
    /// Residual or violation, compared against `tolerance`.
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Probe {
    fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceReport {
    pub claim: String,
    pub method: SolverMethod,
    #[serde(rename = "F")]
    pub f: f64,
    pub stderr: f64,
    pub diagnostics: Diagnostics,
    #[serde(default)]
    pub probes: Vec<Probe>,
}

impl PriceReport {
    pub fn probes_passed(&self) -> usize {
        self.probes.iter().filter(|p| p.passed).count()
    }
}

/// Short identifier of a claim for reports.
pub fn claim_id(claim: &Claim) -> String {
    match claim.kind() {
        ClaimKind::Constant(c) => format!("constant({c})"),
        ClaimKind::Attainable { v0, hedge } => format!(
            "attainable(v0={v0};H={})",
            hedge.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(";")
        ),
        ClaimKind::TerminalW2 { payoff, clamp } => format!("w2:{payoff:?}(clamp={clamp})"),
        ClaimKind::TerminalJoint { payoff, clamp } => format!("joint:{payoff:?}(clamp={clamp})"),
        ClaimKind::Combination { terms, offset } => format!(
            "{offset}+{}",
            terms
                .iter()
                .map(|(w, c)| format!("{w}*[{}]", claim_id(c)))
                .collect::<Vec<_>>()
                .join("+")
        ),
    }
}

/// Prices claims in one market with one integrand and solver. Monte Carlo
/// pricers hold a single bundle, so every comparison between prices is paired.
#[derive(Debug, Clone)]
pub struct Pricer {
    integrand: ConvexIntegrand,
    params: MarketParams,
    grid: TimeGrid,
    choice: SolverChoice,
    bundle: Option<Arc<PathBundle>>,
    conditions: ConditionReport,
}

impl Pricer {
    /// Checks the growth conditions on a sample grid and, for Monte Carlo,
    /// simulates the bundle.
    pub fn new(integrand: ConvexIntegrand, params: MarketParams, grid: TimeGrid, choice: SolverChoice) -> Result<Self> {
        let op = "new";
        if integrand.dim() != params.n2() {
            return Err(PricerError::config(MODULE, op, "integrand dimension must equal n2"));
        }
        let per_axis = match integrand.dim() {
            1 => 65,
            2 => 21,
            _ => 9,
        };
        let conditions = integrand.check_conditions(&sample_grid(integrand.dim(), 8.0, per_axis))?;
        if !conditions.admissible() {
            return Err(PricerError::config(
                MODULE,
                op,
                format!(
                    "integrand violates the growth conditions for K = {} (quadratic growth: {:.3e}, conjugate subgradient growth: {:.3e})",
                    integrand.growth(),
                    conditions.quadratic_growth.worst_violation,
                    conditions.conjugate_subgradient_growth.worst_violation
                ),
            ));
        }
        let bundle = match &choice {
            SolverChoice::RegressionMc { paths, seed, .. } => Some(Arc::new(simulate(&params, grid, *paths, *seed)?)),
            _ => None,
        };
        Ok(Self {
            integrand,
            params,
            grid,
            choice,
            bundle,
            conditions,
        })
    }

    /// Replaces the Monte Carlo bundle, e.g. to share one across pricers.
    pub fn with_bundle(mut self, bundle: Arc<PathBundle>) -> Result<Self> {
        if bundle.grid() != self.grid || bundle.n1() != self.params.n1() || bundle.n2() != self.params.n2() {
            return Err(PricerError::config(
                MODULE,
                "with_bundle",
                "bundle does not match the market and grid",
            ));
        }
        self.bundle = Some(bundle);
        Ok(self)
    }

    pub fn integrand(&self) -> &ConvexIntegrand {
        &self.integrand
    }

    pub fn params(&self) -> &MarketParams {
        &self.params
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn choice(&self) -> &SolverChoice {
        &self.choice
    }

    pub fn bundle(&self) -> Option<&Arc<PathBundle>> {
        self.bundle.as_ref()
    }

    pub fn conditions(&self) -> &ConditionReport {
        &self.conditions
    }

    pub fn tolerance(&self) -> f64 {
        self.choice.tolerance()
    }

    pub fn solve(&self, claim: &Claim) -> Result<BsdeSolution> {
        match &self.choice {
            SolverChoice::RegressionMc { cfg, .. } => {
                let bundle = self
                    .bundle
                    .as_ref()
                    .ok_or_else(|| PricerError::config(MODULE, "solve", "Monte Carlo pricer has no bundle"))?;
                solve_regression_mc(claim, &self.integrand, &self.params, bundle, cfg)
            }
            SolverChoice::PdeFd(cfg) => solve_pde_fd(claim, &self.integrand, &self.params, self.grid, cfg),
            SolverChoice::ColeHopf(cfg) => cole_hopf_solve(claim, &self.integrand, &self.params, self.grid, cfg),
        }
    }

    /// `F(ξ)` with the solver diagnostics. Fails if the price is not finite or
    /// leaves `[−bound(ξ), bound(ξ)]` by more than the solver tolerance.
    pub fn price(&self, claim: &Claim) -> Result<PriceReport> {
        let sol = self.solve(claim)?;
        self.report(claim, &sol)
    }

    fn report(&self, claim: &Claim, sol: &BsdeSolution) -> Result<PriceReport> {
        let op = "price";
        let slack = self.tolerance() + 3.0 * sol.stderr;
        if !sol.y0.is_finite() || sol.y0.abs() > claim.bound() + slack {
            return Err(PricerError::domain(
                MODULE,
                op,
                format!("price {} outside the claim bound {}", sol.y0, claim.bound()),
            ));
        }
        Ok(PriceReport {
            claim: claim_id(claim),
            method: sol.method,
            f: sol.y0,
            stderr: sol.stderr,
            diagnostics: sol.diagnostics.clone(),
            probes: Vec::new(),
        })
    }

    fn value(&self, claim: &Claim) -> Result<f64> {
        Ok(self.solve(claim)?.y0)
    }

    /// `|F(ξ + v₀) − F(ξ) − v₀|`.
    pub fn probe_translation(&self, claim: &Claim, v0: f64) -> Result<Probe> {
        let base = self.value(claim)?;
        let shifted = self.value(&claim.shifted(v0)?)?;
        Ok(Probe::at_most(
            format!("translation({v0})"),
            (shifted - base - v0).abs(),
            2.0 * self.tolerance(),
        ))
    }

    /// Largest `F(αξ₁ + (1−α)ξ₂) − αF(ξ₁) − (1−α)F(ξ₂)` over `alphas`
    /// (positive part).
    pub fn probe_convexity(&self, a: &Claim, b: &Claim, alphas: &[f64]) -> Result<Probe> {
        let fa = self.value(a)?;
        let fb = self.value(b)?;
        let mut worst = 0.0_f64;
        for &alpha in alphas {
            let mix = self.value(&Claim::mixture(alpha, a, b)?)?;
            worst = worst.max(mix - alpha * fa - (1.0 - alpha) * fb);
        }
        Ok(Probe::at_most("convexity", worst, 2.0 * self.tolerance()))
    }

    /// For `lo ≤ hi` pathwise: the violation `max(0, F(lo) − F(hi))`.
    pub fn probe_monotonicity(&self, lo: &Claim, hi: &Claim) -> Result<Probe> {
        let gap = self.value(hi)? - self.value(lo)?;
        Ok(Probe::at_most("monotonicity", (-gap).max(0.0), 2.0 * self.tolerance()))
    }

    /// For `ξ ≥ 0` with `P(ξ > 0) > 0`: `F(ξ)` must exceed one standard
    /// error (or be positive for deterministic solvers). The value reported
    /// is `stderr − F`.
    pub fn probe_positivity(&self, claim: &Claim) -> Result<Probe> {
        let sol = self.solve(claim)?;
        let value = sol.stderr - sol.y0;
        Ok(Probe {
            name: "strict_positivity".into(),
            value,
            tolerance: 0.0,
            passed: if sol.stderr > 0.0 { value <= 0.0 } else { sol.y0 > 0.0 },
        })
    }

    /// Prices a claim and runs translation (`±1`), convexity against `−ξ`
    /// and monotonicity against `ξ + 1` on it.
    pub fn price_with_probes(&self, claim: &Claim) -> Result<PriceReport> {
        let sol = self.solve(claim)?;
        let mut report = self.report(claim, &sol)?;
        let neg = Claim::combination(vec![(-1.0, claim.clone())], 0.0)?;
        report.probes = vec![
            self.probe_translation(claim, 1.0)?,
            self.probe_translation(claim, -1.0)?,
            self.probe_convexity(claim, &neg, &[0.25, 0.5, 0.75])?,
            self.probe_monotonicity(claim, &claim.shifted(1.0)?)?,
        ];
        Ok(report)
    }
}

/// CSV table of a batch of price reports.
pub fn batch_csv(reports: &[PriceReport]) -> String {
    let mut out = String::from("claim,method,F,stderr,probes_passed\n");
    for r in reports {
        out.push_str(&format!(
            "\"{}\",{},{:.12e},{:.6e},{}/{}\n",
            r.claim,
            r.method,
            r.f,
            r.stderr,
            r.probes_passed(),
            r.probes.len()
        ));
    }
    out
}
