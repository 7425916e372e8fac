//! Generalized entropy penalties, duality gaps and the solution-derived
//! measures.
//!
//! For `Q` with density `ℰ(−λ·W¹ + γ·W²)` the penalty is
//! `H^ρ(Q|Q^min) = E_Q[∫ρ̂(γ)dt] = E[∫q ρ̂(γ)dt]`, and
//! `F(ξ) ≥ E_Q[ξ] − H^ρ(Q|Q^min)` with equality at `γ ∈ ∂ρ(Z²)`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bsde::{BsdeSolution, ZField};
use crate::claims::Claim;
use crate::convex_integrand::ConvexIntegrand;
use crate::error::{PricerError, Result};
use crate::market_paths::{density_process, gamma_along, girsanov_shift, MarketParams, MeasureSpec, PathBundle};
use crate::stats::Estimate;

const MODULE: &str = "duality";

/// Number of combined standard errors allowed in statistical contracts.
pub const SIGMAS: f64 = 3.0;

/// Both estimators of `H^ρ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyEstimate {
    /// `E[Σ qᵢ ρ̂(γᵢ) Δt]` on the P bundle.
    pub weighted: Estimate,
    /// `Σ ρ̂(γᵢ) Δt` averaged over the bundle shifted to `Q`.
    pub shifted: Estimate,
}

impl PenaltyEstimate {
    pub fn agree(&self) -> bool {
        (self.weighted.mean - self.shifted.mean).abs() <= SIGMAS * self.weighted.combined_stderr(&self.shifted) + 1e-12
    }
}

/// Relative entropy `H(Q|Q^min)` two ways.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    /// `E_Q[Σ ½|γᵢ|² Δt]`, the entropy-Hellinger process at `T`.
    pub hellinger: Estimate,
    /// `E_Q[ln(q_T / q^min_T)] = E_Q[Σ γᵢ·ΔW²ᵢ − ½|γᵢ|²Δt]`, with `ΔW²` the
    /// P-Brownian increments along the shifted paths.
    pub direct: Estimate,
}

/// One row of a dual scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualReport {
    pub spec: String,
    pub h_weighted: Estimate,
    pub h_shifted: Estimate,
    pub e_q_xi: Estimate,
    /// The primal price the gap is measured against.
    #[serde(rename = "F")]
    pub f: Estimate,
    /// `F − (E_Q[ξ] − H^ρ)`.
    pub gap: f64,
    pub gap_stderr: f64,
    /// `H(Q|Q^min)` from the entropy-Hellinger process.
    pub relative_entropy: Estimate,
    /// Paths dropped from the weighted estimator because their density overflowed.
    pub flagged_paths: usize,
}

impl DualReport {
    pub fn estimators_agree(&self) -> bool {
        (self.h_weighted.mean - self.h_shifted.mean).abs()
            <= SIGMAS * self.h_weighted.combined_stderr(&self.h_shifted) + 1e-12
    }

    /// Weak duality within `SIGMAS` standard errors.
    pub fn gap_nonnegative(&self) -> bool {
        self.gap >= -SIGMAS * self.gap_stderr - 1e-12
    }

    /// `H/K ≤ H^ρ ≤ 2H/K` up to `SIGMAS` standard errors, from the parabola
    /// bounds on ρ̂. Both sides use the same shifted paths.
    pub fn sandwich_holds(&self, growth: f64) -> bool {
        let h = self.relative_entropy.mean;
        let slack = SIGMAS * self.h_shifted.stderr.max(self.relative_entropy.stderr) + 1e-12;
        self.h_shifted.mean >= h / growth - slack && self.h_shifted.mean <= 2.0 * h / growth + slack
    }
}

fn penalty_sums(integrand: &ConvexIntegrand, bundle: &PathBundle, gamma: &[f64]) -> Vec<f64> {
    let (n, n2) = (bundle.grid().steps(), bundle.n2());
    let dt = bundle.grid().dt();
    (0..bundle.paths())
        .into_par_iter()
        .map(|m| {
            let g = &gamma[m * n * n2..(m + 1) * n * n2];
            g.chunks(n2).map(|gi| integrand.rho_hat_unchecked(gi)).sum::<f64>() * dt
        })
        .collect()
}

fn check_dims(integrand: &ConvexIntegrand, bundle: &PathBundle, op: &'static str) -> Result<()> {
    if integrand.dim() != bundle.n2() {
        return Err(PricerError::config(MODULE, op, "integrand dimension must equal n2"));
    }
    Ok(())
}

/// `H^ρ(Q|Q^min)` by density weighting and by Girsanov shifting.
pub fn entropy_penalty(
    spec: &MeasureSpec,
    integrand: &ConvexIntegrand,
    bundle: &PathBundle,
    params: &MarketParams,
) -> Result<PenaltyEstimate> {
    check_dims(integrand, bundle, "entropy_penalty")?;
    Ok(PenaltyEstimate {
        weighted: weighted_penalty(spec, integrand, bundle, params)?.0,
        shifted: {
            let shifted = girsanov_shift(spec, bundle, params)?;
            let gamma = gamma_along(spec, &shifted)?;
            Estimate::from_samples(&penalty_sums(integrand, &shifted, &gamma))
        },
    })
}

fn weighted_penalty(
    spec: &MeasureSpec,
    integrand: &ConvexIntegrand,
    bundle: &PathBundle,
    params: &MarketParams,
) -> Result<(Estimate, usize)> {
    if spec.is_minimal() {
        return Ok((Estimate::exact(0.0), 0));
    }
    let gamma = gamma_along(spec, bundle)?;
    let q = density_process(spec, bundle, params)?;
    let (n, n2) = (bundle.grid().steps(), bundle.n2());
    let dt = bundle.grid().dt();
    let samples: Vec<f64> = (0..bundle.paths())
        .into_par_iter()
        .map(|m| {
            (0..n)
                .map(|i| {
                    let gi = &gamma[(m * n + i) * n2..(m * n + i + 1) * n2];
                    q.at(m, i) * integrand.rho_hat_unchecked(gi)
                })
                .sum::<f64>()
                * dt
        })
        .collect();
    Ok((Estimate::from_samples(&samples), q.flagged.len()))
}

fn hellinger_and_direct(bundle_q: &PathBundle, gamma: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (n, n2) = (bundle_q.grid().steps(), bundle_q.n2());
    let dt = bundle_q.grid().dt();
    (0..bundle_q.paths())
        .into_par_iter()
        .map(|m| {
            let mut h = 0.0;
            let mut d = 0.0;
            for i in 0..n {
                let gi = &gamma[(m * n + i) * n2..(m * n + i + 1) * n2];
                let dw = bundle_q.dw2(m, i);
                let sq: f64 = gi.iter().map(|g| g * g).sum();
                h += 0.5 * sq * dt;
                d += gi.iter().zip(dw).map(|(g, w)| g * w).sum::<f64>() - 0.5 * sq * dt;
            }
            (h, d)
        })
        .unzip()
}

/// `H(Q|Q^min)` from the entropy-Hellinger process and from the log density.
pub fn entropy_hellinger(spec: &MeasureSpec, bundle: &PathBundle, params: &MarketParams) -> Result<EntropyEstimate> {
    let shifted = girsanov_shift(spec, bundle, params)?;
    let gamma = gamma_along(spec, &shifted)?;
    let (h, d) = hellinger_and_direct(&shifted, &gamma);
    Ok(EntropyEstimate {
        hellinger: Estimate::from_samples(&h),
        direct: Estimate::from_samples(&d),
    })
}

/// `F − (E_Q[ξ] − H^ρ)` together with all ingredients. `E_Q[ξ]` and the
/// shifted penalty come from the same shifted paths, so the gap's standard
/// error is that of `ξ − Σρ̂(γ)Δt` combined with the one of `F`.
pub fn duality_gap(
    claim: &Claim,
    spec: &MeasureSpec,
    integrand: &ConvexIntegrand,
    f: Estimate,
    bundle: &PathBundle,
    params: &MarketParams,
) -> Result<DualReport> {
    check_dims(integrand, bundle, "duality_gap")?;
    claim.validate_for(params)?;
    let shifted = girsanov_shift(spec, bundle, params)?;
    let gamma = gamma_along(spec, &shifted)?;
    let penalty = penalty_sums(integrand, &shifted, &gamma);
    let (h, _) = hellinger_and_direct(&shifted, &gamma);
    let xi: Vec<f64> = (0..shifted.paths())
        .into_par_iter()
        .map(|m| claim.payoff(shifted.terminal_s(m), shifted.terminal_w2(m), params.s0()))
        .collect();
    let net: Vec<f64> = xi.iter().zip(&penalty).map(|(x, p)| x - p).collect();
    let net_est = Estimate::from_samples(&net);
    drop(shifted);
    let (h_weighted, flagged) = weighted_penalty(spec, integrand, bundle, params)?;
    Ok(DualReport {
        spec: spec.label().to_string(),
        h_weighted,
        h_shifted: Estimate::from_samples(&penalty),
        e_q_xi: Estimate::from_samples(&xi),
        f,
        gap: f.mean - net_est.mean,
        gap_stderr: net_est.combined_stderr(&f),
        relative_entropy: Estimate::from_samples(&h),
        flagged_paths: flagged,
    })
}

/// The scan family: constant `γ` on `{−2, −1.5, …, 2}^{n₂}` and ramps
/// `γ(t) = a·t` with `a ∈ {−2, −1, 1, 2}` in every component.
pub fn scan_family(n2: usize) -> Vec<MeasureSpec> {
    let levels: Vec<f64> = (-4..=4).map(|j| 0.5 * j as f64).collect();
    let mut points: Vec<Vec<f64>> = vec![Vec::new()];
    for _ in 0..n2 {
        points = points
            .into_iter()
            .flat_map(|p| {
                levels.iter().map(move |&l| {
                    let mut q = p.clone();
                    q.push(l);
                    q
                })
            })
            .collect();
    }
    let mut out: Vec<MeasureSpec> = points.into_iter().map(MeasureSpec::constant).collect();
    for a in [-2.0, -1.0, 1.0, 2.0] {
        out.push(MeasureSpec::ramp(vec![a; n2]));
    }
    out
}

fn require_fields(solution: &BsdeSolution, op: &'static str) -> Result<()> {
    if solution.has_fields() {
        Ok(())
    } else {
        Err(PricerError::config(
            MODULE,
            op,
            "solution-derived measures need a RegressionMC or PdeFd solution",
        ))
    }
}

/// The dual optimizer `γ* ∈ ∂ρ(Z²)` as a state-feedback measure.
pub fn optimizer_measure(solution: &BsdeSolution, integrand: &ConvexIntegrand) -> Result<MeasureSpec> {
    require_fields(solution, "optimizer_measure")?;
    let rho = integrand.clone();
    let field = ZField::new(solution.clone(), move |z2, out| match rho.subdiff_rho(z2) {
        Ok(g) => out.copy_from_slice(&g),
        Err(_) => out.fill(f64::NAN),
    });
    Ok(MeasureSpec::state_feedback("optimizer", Arc::new(field)))
}

/// The pricing measure `γ̂ = Z²ρ(Z²)/|Z²|²` (zero where `Z² = 0`).
pub fn pricing_measure(solution: &BsdeSolution, integrand: &ConvexIntegrand) -> Result<MeasureSpec> {
    require_fields(solution, "pricing_measure")?;
    let rho = integrand.clone();
    let field = ZField::new(solution.clone(), move |z2, out| {
        let sq: f64 = z2.iter().map(|z| z * z).sum();
        if sq < 1e-24 {
            out.fill(0.0);
            return;
        }
        let r = rho.rho_unchecked(z2);
        for (o, z) in out.iter_mut().zip(z2) {
            *o = z * r / sq;
        }
    });
    Ok(MeasureSpec::state_feedback("pricing", Arc::new(field)))
}

/// `E_{Q̂}[ξ]` against `F` under the pricing measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricingMeasureCheck {
    pub e_q_xi: Estimate,
    #[serde(rename = "F")]
    pub f: Estimate,
    pub residual: f64,
    pub stderr: f64,
    pub passed: bool,
}

pub fn pricing_measure_check(
    solution: &BsdeSolution,
    claim: &Claim,
    integrand: &ConvexIntegrand,
    bundle: &PathBundle,
    params: &MarketParams,
) -> Result<PricingMeasureCheck> {
    let spec = pricing_measure(solution, integrand)?;
    let shifted = girsanov_shift(&spec, bundle, params)?;
    let xi: Vec<f64> = (0..shifted.paths())
        .into_par_iter()
        .map(|m| claim.payoff(shifted.terminal_s(m), shifted.terminal_w2(m), params.s0()))
        .collect();
    let e = Estimate::from_samples(&xi);
    let f = Estimate {
        mean: solution.y0,
        stderr: solution.stderr,
    };
    let residual = (e.mean - f.mean).abs();
    let stderr = e.combined_stderr(&f);
    Ok(PricingMeasureCheck {
        e_q_xi: e,
        f,
        residual,
        stderr,
        passed: residual <= SIGMAS * stderr + 1e-12,
    })
}

/// CSV table of a dual scan.
pub fn scan_csv(reports: &[DualReport]) -> String {
    let mut out = String::from("gamma_spec,E_Q_xi,H_rho,gap,stderr\n");
    for r in reports {
        out.push_str(&format!(
            "\"{}\",{:.10e},{:.10e},{:.10e},{:.6e}\n",
            r.spec, r.e_q_xi.mean, r.h_shifted.mean, r.gap, r.gap_stderr
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::claims::W2Payoff;
    use crate::market_paths::{simulate, TimeGrid};

    fn bundle(paths: usize, seed: u64) -> (MarketParams, PathBundle) {
        let p = MarketParams::scalar(0.0, 0.2).unwrap();
        let b = simulate(&p, TimeGrid::new(1.0, 20).unwrap(), paths, seed).unwrap();
        (p, b)
    }

    #[test]
    fn minimal_measure_has_zero_penalty() {
        let (p, b) = bundle(500, 1);
        let rho = ConvexIntegrand::quadratic(1.0, 1.0, 1).unwrap();
        let e = entropy_penalty(&MeasureSpec::minimal(), &rho, &b, &p).unwrap();
        assert_eq!(e.weighted.mean, 0.0);
        assert_eq!(e.shifted.mean, 0.0);
        let h = entropy_hellinger(&MeasureSpec::minimal(), &b, &p).unwrap();
        assert_eq!(h.hellinger.mean, 0.0);
        assert_eq!(h.direct.mean, 0.0);
    }

    #[test]
    fn constant_gamma_penalties() {
        let (p, b) = bundle(20_000, 2);
        let spec = MeasureSpec::constant(vec![0.8]);
        for (k, expect) in [(1.0, 0.32), (2.0, 0.16)] {
            let rho = ConvexIntegrand::quadratic(k, k, 1).unwrap();
            let e = entropy_penalty(&spec, &rho, &b, &p).unwrap();
            assert!((e.shifted.mean - expect).abs() < 1e-12);
            assert!((e.weighted.mean - expect).abs() < 0.01, "{}", e.weighted.mean);
            assert!(e.agree());
        }
    }

    #[test]
    fn ramp_entropy() {
        let (p, b) = bundle(20_000, 3);
        let h = entropy_hellinger(&MeasureSpec::ramp(vec![1.0]), &b, &p).unwrap();
        // Left-point sum of t²/2 on 20 steps.
        let riemann: f64 = (0..20).map(|i| 0.5 * (i as f64 / 20.0).powi(2) / 20.0).sum();
        assert!((h.hellinger.mean - riemann).abs() < 1e-12);
        assert!((riemann - 1.0 / 6.0).abs() < 0.02);
        assert!((h.direct.mean - h.hellinger.mean).abs() < 4.0 * h.direct.stderr);
    }

    #[test]
    fn gaps_for_identity_claim() {
        let (p, b) = bundle(20_000, 4);
        let rho = ConvexIntegrand::quadratic(1.0, 1.0, 1).unwrap();
        let claim = Claim::terminal_w2(W2Payoff::Identity, 1.0).unwrap();
        let f = Estimate::exact(0.5);
        for (g, expect) in [(0.0, 0.5), (1.0, 0.0), (2.0, 0.5)] {
            let r = duality_gap(&claim, &MeasureSpec::constant(vec![g]), &rho, f, &b, &p).unwrap();
            assert!((r.gap - expect).abs() < 4.0 * r.gap_stderr + 1e-9, "γ = {g}: {}", r.gap);
            assert!(r.gap_nonnegative());
            assert!(r.sandwich_holds(1.0));
        }
    }

    #[test]
    fn scan_family_size() {
        assert_eq!(scan_family(1).len(), 13);
        assert_eq!(scan_family(2).len(), 85);
    }

    #[test]
    fn measures_need_fields() {
        let p = MarketParams::scalar(0.0, 0.0).unwrap();
        let rho = ConvexIntegrand::quadratic(1.0, 1.0, 1).unwrap();
        let sol = crate::bsde::cole_hopf_solve(
            &Claim::constant(1.0).unwrap(),
            &rho,
            &p,
            TimeGrid::new(1.0, 2).unwrap(),
            &Default::default(),
        )
        .unwrap();
        assert!(optimizer_measure(&sol, &rho).unwrap_err().is_config());
    }
}
