//! Least-squares Monte Carlo backward induction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::basis::{Design, SliceFit};
use super::{
    check_claim, check_integrand, driver, BsdeSolution, Diagnostics, EnergyCheck, Fields, GridInfo, SolverMethod,
    MODULE,
};
use crate::claims::Claim;
use crate::convex_integrand::ConvexIntegrand;
use crate::error::{PricerError, Result};
use crate::market_paths::{MarketParams, PathBundle};
use crate::stats::{mean, Estimate};

/// Truncation activity above this rate is reported as a warning.
pub const TRUNCATION_WARN: f64 = 0.01;
/// Truncation activity above this rate fails the solve.
pub const TRUNCATION_FAIL: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    /// Total degree of the polynomial basis in `(S, W²)`.
    pub degree: usize,
    pub ridge: f64,
    /// Bound on `|Z²|`; `None` uses `4·Lip(ξ)` in `W²_T`.
    pub r_trunc: Option<f64>,
    /// Largest accepted condition number of a standardized Gram matrix.
    pub max_condition: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            degree: 3,
            ridge: 1e-8,
            r_trunc: None,
            max_condition: 1e12,
        }
    }
}

/// Per-slice regression fits, evaluable at any state.
#[derive(Debug)]
pub(crate) struct RegressionFields {
    /// Targets per slice: `E[Y_{i+1}|x]`, then `Z¹` components, then `Z²`.
    slices: Vec<SliceFit>,
    n1: usize,
    n2: usize,
    lambdas: Vec<Vec<f64>>,
    dt: f64,
    integrand: ConvexIntegrand,
    r_trunc: f64,
}

impl RegressionFields {
    fn state(&self, s: &[f64], w2: &[f64]) -> Vec<f64> {
        s.iter().chain(w2).copied().collect()
    }

    pub(crate) fn z(&self, step: usize, s: &[f64], w2: &[f64], z1: &mut [f64], z2: &mut [f64]) {
        let x = self.state(s, w2);
        let fit = &self.slices[step];
        for (j, z) in z1.iter_mut().enumerate() {
            *z = fit.eval(1 + j, &x);
        }
        for (j, z) in z2.iter_mut().enumerate() {
            *z = fit.eval(1 + self.n1 + j, &x);
        }
        truncate(z2, self.r_trunc);
    }

    pub(crate) fn y(&self, step: usize, s: &[f64], w2: &[f64]) -> f64 {
        let x = self.state(s, w2);
        let mut z1 = vec![0.0; self.n1];
        let mut z2 = vec![0.0; self.n2];
        self.z(step, s, w2, &mut z1, &mut z2);
        self.slices[step].eval(0, &x) + driver(&self.integrand, &self.lambdas[step], &z1, &z2) * self.dt
    }
}

/// Scales `z` onto the ball of radius `r`; returns whether it was active.
/// A zero radius marks a claim without `W²` exposure, whose `Z²` vanishes
/// identically; that is not counted as an activation.
fn truncate(z: &mut [f64], r: f64) -> bool {
    if r == 0.0 {
        z.fill(0.0);
        return false;
    }
    let n = z.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > r {
        for x in z.iter_mut() {
            *x *= r / n;
        }
        true
    } else {
        false
    }
}

/// Solves the BSDE by backward induction on `bundle`.
///
/// With `Pᵢ₊₁ = ξ + Σ_{j>i} (f(tⱼ, Zⱼ)Δt − Zⱼ·ΔWⱼ)` along each path,
/// `E[Y_{i+1}|xᵢ]` is the regression of `Pᵢ₊₁` on the state `xᵢ = (Sᵢ, W²ᵢ)`,
/// so regression errors in `Y` do not compound from slice to slice. The
/// martingale terms have conditional mean zero and remove most of the
/// variance of the regression targets. `Zʲᵢ` is the regression of
/// `(Pᵢ₊₁ − E[Y_{i+1}|xᵢ])·ΔWʲᵢ/Δt` and `Yᵢ = E[Y_{i+1}|xᵢ] + f(tᵢ, Zᵢ)Δt`.
/// The reported standard error is the sample error of `ξ + Σ f Δt`; the
/// spread of `P₀` alone misses the regression noise.
pub fn solve_regression_mc(
    claim: &Claim,
    integrand: &ConvexIntegrand,
    params: &MarketParams,
    bundle: &PathBundle,
    cfg: &McConfig,
) -> Result<BsdeSolution> {
    let op = "solve_regression_mc";
    check_claim(claim, params, op)?;
    check_integrand(integrand, params, op)?;
    if bundle.n1() != params.n1() || bundle.n2() != params.n2() {
        return Err(PricerError::config(MODULE, op, "bundle and market dimensions differ"));
    }
    if !(cfg.ridge >= 0.0 && cfg.ridge.is_finite()) || cfg.degree > 8 {
        return Err(PricerError::config(
            MODULE,
            op,
            "ridge must be nonnegative and degree at most 8",
        ));
    }
    let (m_paths, n1, n2) = (bundle.paths(), bundle.n1(), bundle.n2());
    let grid = bundle.grid();
    let (n, dt) = (grid.steps(), grid.dt());
    let r_trunc = match cfg.r_trunc {
        Some(r) if r >= 0.0 && r.is_finite() => r,
        Some(r) => {
            return Err(PricerError::config(
                MODULE,
                op,
                format!("invalid truncation radius {r}"),
            ))
        }
        None => 4.0 * claim.w2_lipschitz(dt.sqrt()),
    };
    let bound = claim.bound();
    let s0 = params.s0();

    let xi: Vec<f64> = (0..m_paths)
        .into_par_iter()
        .map(|m| claim.payoff(bundle.terminal_s(m), bundle.terminal_w2(m), s0))
        .collect();
    let terminal_dev: Vec<f64> = xi.iter().map(|x| (x - bound).powi(2)).collect();
    let mut y_next = xi.clone();
    // ξ + Σ_{j>i} (f_j Δt − Z_j·ΔW_j) along each path.
    let mut pathwise = xi.clone();
    // ξ + Σ f_j Δt, whose sample spread sets the reported standard error.
    let mut plain = xi.clone();
    let mut slices = Vec::with_capacity(n);
    let mut conditions = vec![0.0; n];
    let mut lambdas = vec![Vec::new(); n];
    let mut z_energy = vec![0.0; n];
    let mut y_energy = vec![0.0; n];
    let mut activations = 0usize;
    let mut y_max = xi.iter().fold(0.0_f64, |a, x| a.max(x.abs()));

    let mut cond_mean = vec![0.0; m_paths];
    let mut target = vec![0.0; m_paths];
    for i in (0..n).rev() {
        let mut design = Design::build(
            |m, out: &mut [f64]| {
                out[..n1].copy_from_slice(bundle.s(m, i));
                out[n1..].copy_from_slice(bundle.w2(m, i));
            },
            m_paths,
            n1 + n2,
            cfg.degree,
            cfg.ridge,
        );
        let cond = design.condition();
        conditions[i] = cond;
        if cond.is_nan() || cond > cfg.max_condition {
            return Err(PricerError::BasisDegradation { slice: i, cond });
        }
        design.regress(&pathwise, &mut cond_mean);

        let mut z = vec![vec![0.0; m_paths]; n1 + n2];
        for (j, zj) in z.iter_mut().enumerate() {
            target.par_iter_mut().enumerate().for_each(|(m, t)| {
                let dw = if j < n1 {
                    bundle.dw1(m, i)[j]
                } else {
                    bundle.dw2(m, i)[j - n1]
                };
                *t = (pathwise[m] - cond_mean[m]) * dw / dt;
            });
            design.regress(&target, zj);
        }

        let lam = params.lambda_at(grid.time(i)).to_vec();
        let per_path: Vec<(f64, f64, f64, bool, f64)> = (0..m_paths)
            .into_par_iter()
            .map(|m| {
                let z1: Vec<f64> = (0..n1).map(|j| z[j][m]).collect();
                let mut z2: Vec<f64> = (0..n2).map(|j| z[n1 + j][m]).collect();
                let active = truncate(&mut z2, r_trunc);
                let f = driver(integrand, &lam, &z1, &z2);
                let zsq = z1.iter().chain(&z2).map(|v| v * v).sum::<f64>();
                let zdw = z1.iter().zip(bundle.dw1(m, i)).chain(z2.iter().zip(bundle.dw2(m, i)));
                let mart: f64 = zdw.map(|(z, w)| z * w).sum();
                (cond_mean[m] + f * dt, f * dt, zsq, active, mart)
            })
            .collect();
        activations += per_path.iter().filter(|p| p.3).count();
        for (m, p) in per_path.iter().enumerate() {
            y_next[m] = p.0;
            pathwise[m] += p.1 - p.4;
            plain[m] += p.1;
            y_max = y_max.max(p.0.abs());
        }
        let zsq: Vec<f64> = per_path.iter().map(|p| p.2).collect();
        let ydev: Vec<f64> = per_path.iter().map(|p| (p.0 - bound).powi(2)).collect();
        z_energy[i] = mean(&zsq) * dt;
        y_energy[i] = mean(&ydev) * dt;
        if per_path.iter().any(|p| !p.0.is_finite()) {
            return Err(PricerError::domain(MODULE, op, format!("non-finite Y at step {i}")));
        }
        lambdas[i] = lam;
        slices.push(design.into_fit());
    }
    slices.reverse();

    let total = (m_paths * n) as f64;
    let truncation_rate = activations as f64 / total;
    if truncation_rate > TRUNCATION_FAIL {
        return Err(PricerError::Truncation { rate: truncation_rate });
    }
    let mut warnings = Vec::new();
    if truncation_rate > TRUNCATION_WARN {
        warnings.push(format!(
            "Z truncation at radius {r_trunc:.4} active on {:.2}% of samples",
            100.0 * truncation_rate
        ));
    }

    let y0 = mean(&y_next);
    let stderr = Estimate::from_samples(&plain).stderr;
    let lambda_bound = params.lambda_bound();
    let energy = EnergyCheck::new(
        0.5 * z_energy.iter().sum::<f64>(),
        mean(&terminal_dev),
        2.0 * lambda_bound * lambda_bound * y_energy.iter().sum::<f64>(),
    );

    let diagnostics = Diagnostics {
        method: SolverMethod::RegressionMc,
        y0,
        stderr,
        truncation_rate,
        truncation_activations: activations,
        iterations: 1,
        grid: GridInfo {
            steps: n,
            horizon: grid.horizon(),
            paths: Some(m_paths),
            nodes: None,
            pde_dt: None,
        },
        condition_numbers: conditions,
        truncation_estimate: None,
        y_margin: y_max - bound,
        energy,
        warnings,
    };
    let fields = RegressionFields {
        slices,
        n1,
        n2,
        lambdas,
        dt,
        integrand: integrand.clone(),
        r_trunc,
    };
    Ok(BsdeSolution {
        method: SolverMethod::RegressionMc,
        y0,
        stderr,
        diagnostics,
        grid,
        n1,
        n2,
        claim: claim.clone(),
        s0: s0.to_vec(),
        fields: std::sync::Arc::new(Fields::Regression(fields)),
    })
}
