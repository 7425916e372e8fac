//! Solvers for `dY = −f(t, Z¹, Z²)dt + Z¹dW¹ + Z²dW²`, `Y_T = ξ`, with
//! driver `f(t, z¹, z²) = −z¹·λ(t) + ρ(z²)`.
//!
//! Two independent schemes (regression Monte Carlo on a path bundle and an
//! explicit finite-difference scheme for the value function) plus the
//! closed-form Cole-Hopf value for quadratic ρ and claims on `W²_T`.

mod basis;
mod cole_hopf;
mod pde;
mod regression;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::claims::Claim;
use crate::convex_integrand::ConvexIntegrand;
use crate::error::{PricerError, Result};
use crate::market_paths::{GammaField, MarketParams, TimeGrid};

pub use cole_hopf::{cole_hopf_oracle, cole_hopf_solve};
pub use pde::{solve_pde_fd, PdeConfig};
pub use regression::{solve_regression_mc, McConfig};

pub(crate) const MODULE: &str = "bsde_solver";

/// Relative slack allowed in the energy inequality.
pub const ENERGY_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverMethod {
    #[serde(rename = "RegressionMC")]
    RegressionMc,
    PdeFd,
    ColeHopf,
}

impl std::fmt::Display for SolverMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolverMethod::RegressionMc => "RegressionMC",
            SolverMethod::PdeFd => "PdeFd",
            SolverMethod::ColeHopf => "ColeHopf",
        })
    }
}

/// `f(t, z¹, z²)` with `λ = λ(t)`.
pub fn driver(integrand: &ConvexIntegrand, lambda: &[f64], z1: &[f64], z2: &[f64]) -> f64 {
    let hedge: f64 = z1.iter().zip(lambda).map(|(z, l)| z * l).sum();
    -hedge + integrand.rho_unchecked(z2)
}

/// The discrete energy inequality for `Ỹ = Y − B ≤ 0`, `B = bound(ξ)`:
/// `½E[Σ|Zᵢ|²dt] ≤ E[Ỹ_T²] + 2Λ²E[ΣỸᵢ²dt]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
    pub holds: bool,
}

impl EnergyCheck {
    pub(crate) fn new(lhs: f64, terminal: f64, running: f64) -> Self {
        let rhs = terminal + running;
        Self {
            lhs,
            rhs,
            tolerance: ENERGY_TOLERANCE,
            holds: lhs <= (1.0 + ENERGY_TOLERANCE) * rhs + 1e-12,
        }
    }

    fn trivial() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub steps: usize,
    pub horizon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<[usize; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pde_dt: Option<f64>,
}

/// Solver diagnostics, serialized as the solver JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub method: SolverMethod,
    #[serde(rename = "Y0")]
    pub y0: f64,
    pub stderr: f64,
    pub truncation_rate: f64,
    pub truncation_activations: usize,
    pub iterations: usize,
    pub grid: GridInfo,
    /// Per-slice condition numbers of the standardized regression Gram matrix.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub condition_numbers: Vec<f64>,
    /// Difference to the same scheme on a grid with half the resolution.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation_estimate: Option<f64>,
    /// `sup|Y| − bound(ξ)` over the computed values (negative when inside).
    pub y_margin: f64,
    pub energy: EnergyCheck,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
}

/// Evaluable `(Y, Z¹, Z²)` fields of a solution.
#[derive(Debug)]
pub(crate) enum Fields {
    None,
    Regression(regression::RegressionFields),
    Nodal(pde::NodalFields),
}

/// Result of a BSDE solve. `Y` and `Z` can be evaluated at any grid step and
/// state through [`BsdeSolution::y_at`] and [`BsdeSolution::z_at`]; on the
/// solving bundle these reproduce the per-path values of the scheme.
#[derive(Debug, Clone)]
pub struct BsdeSolution {
    pub method: SolverMethod,
    pub y0: f64,
    pub stderr: f64,
    pub diagnostics: Diagnostics,
    grid: TimeGrid,
    n1: usize,
    n2: usize,
    claim: Claim,
    s0: Vec<f64>,
    fields: Arc<Fields>,
}

impl BsdeSolution {
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn has_fields(&self) -> bool {
        !matches!(*self.fields, Fields::None)
    }

    /// `Y` at grid node `step` and state `(s, w2)`. At the terminal node this
    /// is the claim itself.
    pub fn y_at(&self, step: usize, s: &[f64], w2: &[f64]) -> Result<f64> {
        if step >= self.grid.steps() {
            return Ok(self.claim.payoff(s, w2, &self.s0));
        }
        match &*self.fields {
            Fields::None => Err(self.no_fields("y_at")),
            Fields::Regression(f) => Ok(f.y(step, s, w2)),
            Fields::Nodal(f) => Ok(f.value(step, s[0], w2[0])),
        }
    }

    /// `(Z¹, Z²)` on the step starting at grid node `step` (clamped to the
    /// last step).
    pub fn z_at(&self, step: usize, s: &[f64], w2: &[f64], z1: &mut [f64], z2: &mut [f64]) -> Result<()> {
        let step = step.min(self.grid.steps() - 1);
        match &*self.fields {
            Fields::None => return Err(self.no_fields("z_at")),
            Fields::Regression(f) => f.z(step, s, w2, z1, z2),
            Fields::Nodal(f) => {
                let (a, b) = f.gradient(step, s[0], w2[0]);
                z1[0] = a;
                z2[0] = b;
            }
        }
        Ok(())
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn claim(&self) -> &Claim {
        &self.claim
    }

    fn no_fields(&self, op: &'static str) -> PricerError {
        PricerError::config(
            MODULE,
            op,
            format!(
                "{:?} solutions carry no Y/Z fields; use RegressionMC or PdeFd",
                self.method
            ),
        )
    }

    pub fn diagnostics_json(&self) -> String {
        serde_json::to_string_pretty(&self.diagnostics).expect("diagnostics are serializable")
    }
}

/// `Z²` of a solution seen as a `γ` field, transformed pointwise by `map`.
type ZMap = Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

pub(crate) struct ZField {
    solution: BsdeSolution,
    map: ZMap,
}

impl ZField {
    pub(crate) fn new(solution: BsdeSolution, map: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        Self {
            solution,
            map: Box::new(map),
        }
    }
}

impl GammaField for ZField {
    fn eval(&self, step: usize, _t: f64, s: &[f64], w2: &[f64], out: &mut [f64]) {
        let mut z1 = vec![0.0; self.solution.n1];
        let mut z2 = vec![0.0; self.solution.n2];
        if self.solution.z_at(step, s, w2, &mut z1, &mut z2).is_err() {
            out.fill(f64::NAN);
            return;
        }
        (self.map)(&z2, out);
    }
}

fn check_claim(claim: &Claim, params: &MarketParams, op: &'static str) -> Result<()> {
    claim.validate_for(params)?;
    if !(claim.bound().is_finite()) {
        return Err(PricerError::config(MODULE, op, "claim bound must be finite"));
    }
    Ok(())
}

fn check_integrand(integrand: &ConvexIntegrand, params: &MarketParams, op: &'static str) -> Result<()> {
    if integrand.dim() != params.n2() {
        return Err(PricerError::config(
            MODULE,
            op,
            format!(
                "integrand dimension {} does not match n2 = {}",
                integrand.dim(),
                params.n2()
            ),
        ));
    }
    Ok(())
}
