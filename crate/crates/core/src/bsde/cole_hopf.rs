//! Closed-form value for `ρ(z) = k/2·|z|²` and `ξ = g(W²_T)`.
//!
//! With `v = e^{ku}` the value-function PDE `u_t + ½u_ww + (k/2)u_w² = 0`
//! becomes the heat equation, so `F(ξ) = (1/k)·ln E[exp(k·g(W²_T))]`.

use super::{BsdeSolution, Diagnostics, EnergyCheck, Fields, GridInfo, SolverMethod, MODULE};
use crate::claims::Claim;
use crate::convex_integrand::ConvexIntegrand;
use crate::error::{PricerError, Result};
use crate::market_paths::{MarketParams, TimeGrid};
use crate::quadrature::{log_gaussian_mgf, QuadConfig};

/// `(1/k)·ln E[exp(k·g(W_T))]` by quadrature. `breakpoints` lists the points
/// where `g` is not smooth.
pub fn cole_hopf_oracle(
    g: impl Fn(f64) -> f64,
    breakpoints: &[f64],
    k: f64,
    horizon: f64,
    cfg: &QuadConfig,
) -> Result<f64> {
    let op = "cole_hopf_oracle";
    if !(k > 0.0 && k.is_finite()) {
        return Err(PricerError::domain(MODULE, op, format!("k must be positive, got {k}")));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(PricerError::domain(
            MODULE,
            op,
            "horizon must be finite and nonnegative",
        ));
    }
    let value = log_gaussian_mgf(|w| k * g(w), horizon.sqrt(), breakpoints, cfg) / k;
    if !value.is_finite() {
        return Err(PricerError::domain(
            MODULE,
            op,
            "E[exp(k g(W_T))] is not finite for this payoff",
        ));
    }
    Ok(value)
}

/// The closed-form value of a claim on `W²_T` as a solution without fields.
pub fn cole_hopf_solve(
    claim: &Claim,
    integrand: &ConvexIntegrand,
    params: &MarketParams,
    grid: TimeGrid,
    cfg: &QuadConfig,
) -> Result<BsdeSolution> {
    let op = "cole_hopf_solve";
    let k = integrand
        .quadratic_weight()
        .ok_or_else(|| PricerError::config(MODULE, op, "the closed form needs a quadratic integrand"))?;
    claim.validate_for(params)?;
    let g = claim
        .as_w2_function()
        .ok_or_else(|| PricerError::config(MODULE, op, "the closed form needs a claim on W²_T only"))?;
    let y0 = cole_hopf_oracle(g, &claim.w2_breakpoints(), k, grid.horizon(), cfg)?;
    let diagnostics = Diagnostics {
        method: SolverMethod::ColeHopf,
        y0,
        stderr: 0.0,
        truncation_rate: 0.0,
        truncation_activations: 0,
        iterations: 0,
        grid: GridInfo {
            steps: grid.steps(),
            horizon: grid.horizon(),
            paths: None,
            nodes: None,
            pde_dt: None,
        },
        condition_numbers: Vec::new(),
        truncation_estimate: None,
        y_margin: y0.abs() - claim.bound(),
        energy: EnergyCheck::trivial(),
        warnings: Vec::new(),
    };
    Ok(BsdeSolution {
        method: SolverMethod::ColeHopf,
        y0,
        stderr: 0.0,
        diagnostics,
        grid,
        n1: params.n1(),
        n2: params.n2(),
        claim: claim.clone(),
        s0: params.s0().to_vec(),
        fields: std::sync::Arc::new(Fields::None),
    })
}
