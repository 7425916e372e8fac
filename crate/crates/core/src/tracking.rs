//! Instantaneous risk of hedging errors and optimal tracking.
//!
//! A tracking-error increment `μ dt + z¹·dW¹ + z²·dW²` is scored by
//! `r(μ, z¹, z²) = −μ + δ(z¹, z²)`. For a strategy `H` tracking the BSDE
//! solution, `μ = (H − Z¹)·λ + ρ(Z²)`, `z¹ = H − Z¹`, `z² = −Z²`, and the
//! risk vanishes exactly at `Ĥ = Z¹ − h`, `h = argmin_{z¹} z¹·λ + δ(−z¹, −Z²)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bsde::BsdeSolution;
use crate::convex_integrand::{golden_section_max, ConvexIntegrand};
use crate::error::{PricerError, Result};
use crate::market_paths::{MarketParams, PathBundle};
use crate::stats::{mean, quantile, Estimate};

const MODULE: &str = "tracking";

/// Grid points per axis of the numeric infimum over `z¹`.
pub const INF_GRID_POINTS: usize = 513;
/// Final bracket width of the golden-section refinement.
pub const INF_TOL: f64 = 1e-8;

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The convex score `δ(z¹, z²)` of the diffusion part of an increment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum InstRiskMeasure {
    /// `δ = c + k/2·|z¹|² + k/2·|z²|²`.
    QuadraticDelta { c: f64, k: f64, n1: usize, n2: usize },
    /// `δ = ρ(−z²) + |λ|²/(2k) + k/2·|z¹|²`, built from an integrand.
    FromRho {
        integrand: ConvexIntegrand,
        k: f64,
        lambda: Vec<f64>,
    },
}

fn check_k(k: f64, op: &'static str) -> Result<()> {
    if k.is_finite() && k > 0.0 {
        Ok(())
    } else {
        Err(PricerError::config(MODULE, op, format!("k must be positive, got {k}")))
    }
}

impl InstRiskMeasure {
    pub fn quadratic_delta(c: f64, k: f64, n1: usize, n2: usize) -> Result<Self> {
        check_k(k, "quadratic_delta")?;
        if !c.is_finite() || n1 == 0 || n2 == 0 {
            return Err(PricerError::config(
                MODULE,
                "quadratic_delta",
                "c must be finite and dimensions positive",
            ));
        }
        Ok(Self::QuadraticDelta { c, k, n1, n2 })
    }

    /// The quadratic family normalized for drift `λ`: `c = |λ|²/(2k)`, so
    /// that the induced ρ vanishes at zero.
    pub fn quadratic(k: f64, lambda: &[f64], n2: usize) -> Result<Self> {
        check_k(k, "quadratic")?;
        Self::quadratic_delta(norm_sq(lambda) / (2.0 * k), k, lambda.len(), n2)
    }

    pub fn k(&self) -> f64 {
        match self {
            Self::QuadraticDelta { k, .. } | Self::FromRho { k, .. } => *k,
        }
    }

    pub fn n1(&self) -> usize {
        match self {
            Self::QuadraticDelta { n1, .. } => *n1,
            Self::FromRho { lambda, .. } => lambda.len(),
        }
    }

    pub fn n2(&self) -> usize {
        match self {
            Self::QuadraticDelta { n2, .. } => *n2,
            Self::FromRho { integrand, .. } => integrand.dim(),
        }
    }

    pub fn delta(&self, z1: &[f64], z2: &[f64]) -> f64 {
        match self {
            Self::QuadraticDelta { c, k, .. } => c + 0.5 * k * (norm_sq(z1) + norm_sq(z2)),
            Self::FromRho { integrand, k, lambda } => {
                let neg: Vec<f64> = z2.iter().map(|z| -z).collect();
                integrand.rho_unchecked(&neg) + norm_sq(lambda) / (2.0 * k) + 0.5 * k * norm_sq(z1)
            }
        }
    }

    /// `r(μ, z¹, z²) = −μ + δ(z¹, z²)`.
    pub fn risk(&self, mu: f64, z1: &[f64], z2: &[f64]) -> f64 {
        -mu + self.delta(z1, z2)
    }

    fn check_dims(&self, z1: &[f64], z2: &[f64], op: &'static str) -> Result<()> {
        if z1.len() != self.n1() || z2.len() != self.n2() {
            return Err(PricerError::domain(
                MODULE,
                op,
                format!(
                    "expected dimensions ({}, {}), got ({}, {})",
                    self.n1(),
                    self.n2(),
                    z1.len(),
                    z2.len()
                ),
            ));
        }
        if z1.iter().chain(z2).any(|v| !v.is_finite()) {
            return Err(PricerError::domain(MODULE, op, "non-finite input"));
        }
        Ok(())
    }

    /// Worst violations of the structural assumptions on sampled points:
    /// convexity along segments between consecutive samples, monotonicity of
    /// `x ↦ δ(z¹, x·z²)` on `x ∈ {0, ½, 1, 2}`, and `ρ(0)` of the induced integrand.
    pub fn invariants(&self, lambda: &[f64], samples: &[(Vec<f64>, Vec<f64>)]) -> Result<DeltaInvariants> {
        let mut convexity = 0.0_f64;
        for pair in samples.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let mid1: Vec<f64> = a.0.iter().zip(&b.0).map(|(x, y)| 0.5 * (x + y)).collect();
            let mid2: Vec<f64> = a.1.iter().zip(&b.1).map(|(x, y)| 0.5 * (x + y)).collect();
            let gap = self.delta(&mid1, &mid2) - 0.5 * (self.delta(&a.0, &a.1) + self.delta(&b.0, &b.1));
            convexity = convexity.max(gap);
        }
        let mut monotonicity = 0.0_f64;
        for (z1, z2) in samples {
            let mut prev = f64::NEG_INFINITY;
            for x in [0.0, 0.5, 1.0, 2.0] {
                let scaled: Vec<f64> = z2.iter().map(|z| x * z).collect();
                let v = self.delta(z1, &scaled);
                monotonicity = monotonicity.max(prev - v);
                prev = v;
            }
        }
        let rho0 = rho_from_delta(self, lambda, &[vec![0.0; self.n2()]])?[0];
        Ok(DeltaInvariants {
            convexity_violation: convexity,
            monotonicity_violation: monotonicity,
            rho_at_zero: rho0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaInvariants {
    pub convexity_violation: f64,
    pub monotonicity_violation: f64,
    pub rho_at_zero: f64,
}

/// Minimizer of a convex function on `[−g, g]`: grid scan then golden-section
/// refinement. Returns the minimizer, the minimum and whether the grid
/// minimum was attained on a flat stretch wider than two cells (then the
/// point of smallest magnitude is returned).
fn minimize_1d(f: impl Fn(f64) -> f64, g: f64) -> (f64, f64, bool) {
    let n = INF_GRID_POINTS;
    let step = 2.0 * g / (n - 1) as f64;
    let xs: Vec<f64> = (0..n).map(|j| -g + j as f64 * step).collect();
    let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let best = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * (1.0 + best.abs());
    let near: Vec<usize> = (0..n).filter(|&j| vals[j] <= best + tol).collect();
    let (first, last) = (near[0], near[near.len() - 1]);
    if last - first > 2 {
        let j = *near
            .iter()
            .min_by(|&&a, &&b| xs[a].abs().total_cmp(&xs[b].abs()))
            .expect("nonempty");
        return (xs[j], vals[j], true);
    }
    let j = near[0];
    let lo = xs[j.saturating_sub(1)];
    let hi = xs[(j + 1).min(n - 1)];
    let (x, neg) = golden_section_max(|x| -f(x), lo, hi, INF_TOL);
    if -neg <= vals[j] {
        (x, -neg, false)
    } else {
        (xs[j], vals[j], false)
    }
}

struct Infimum {
    z1: Vec<f64>,
    value: f64,
    tie: bool,
}

/// `inf_{z¹} z¹·λ + δ(−z¹, −z²)` by coordinate-wise minimization on
/// `[−G, G]^{n₁}`, `G = 4(|λ|/k + |z²|)`.
fn infimum(delta: &InstRiskMeasure, lambda: &[f64], z2: &[f64], op: &'static str) -> Result<Infimum> {
    let k = delta.k();
    let reach = 4.0 * (norm_sq(lambda).sqrt() / k + norm_sq(z2).sqrt());
    let g = if reach > 0.0 { reach } else { 1.0 };
    let neg_z2: Vec<f64> = z2.iter().map(|z| -z).collect();
    let objective = |z1: &[f64]| {
        let neg: Vec<f64> = z1.iter().map(|z| -z).collect();
        dot(z1, lambda) + delta.delta(&neg, &neg_z2)
    };
    let n1 = lambda.len();
    let mut z1 = vec![0.0; n1];
    let mut value = objective(&z1);
    let mut tie = false;
    for _sweep in 0..50 {
        let before = value;
        for j in 0..n1 {
            let (x, v, t) = minimize_1d(
                |x| {
                    let mut trial = z1.clone();
                    trial[j] = x;
                    objective(&trial)
                },
                g,
            );
            if (x.abs() - g).abs() < 1e-12 * g {
                return Err(PricerError::domain(
                    MODULE,
                    op,
                    "infimum over z1 sits on the search boundary; delta is not coercive",
                ));
            }
            tie |= t;
            z1[j] = x;
            value = v;
        }
        if n1 == 1 || (before - value).abs() <= 1e-14 * (1.0 + value.abs()) {
            break;
        }
    }
    Ok(Infimum { z1, value, tie })
}

/// `ρ(z²) = inf_{z¹} z¹·λ + δ(−z¹, −z²)` at each point of `z2_grid`.
pub fn rho_from_delta(delta: &InstRiskMeasure, lambda: &[f64], z2_grid: &[Vec<f64>]) -> Result<Vec<f64>> {
    let op = "rho_from_delta";
    if lambda.len() != delta.n1() {
        return Err(PricerError::domain(MODULE, op, "lambda dimension must equal n1"));
    }
    z2_grid
        .iter()
        .map(|z2| {
            delta.check_dims(&vec![0.0; delta.n1()], z2, op)?;
            match delta {
                InstRiskMeasure::QuadraticDelta { k, .. } => {
                    let neg: Vec<f64> = z2.iter().map(|z| -z).collect();
                    Ok(delta.delta(&vec![0.0; lambda.len()], &neg) - norm_sq(lambda) / (2.0 * k))
                }
                InstRiskMeasure::FromRho { .. } => Ok(infimum(delta, lambda, z2, op)?.value),
            }
        })
        .collect()
}

/// `δ(z¹, z²) = ρ(−z²) + |λ|²/(2k) + k/2·|z¹|²`.
pub fn delta_from_rho(integrand: &ConvexIntegrand, k: f64, lambda: &[f64]) -> Result<InstRiskMeasure> {
    check_k(k, "delta_from_rho")?;
    if lambda.is_empty() || lambda.iter().any(|l| !l.is_finite()) {
        return Err(PricerError::config(
            MODULE,
            "delta_from_rho",
            "lambda must be a nonempty finite vector",
        ));
    }
    Ok(InstRiskMeasure::FromRho {
        integrand: integrand.clone(),
        k,
        lambda: lambda.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    /// `Ĥ = Z¹ − h`.
    pub h_hat: Vec<f64>,
    /// The minimizing `z¹`.
    pub h: Vec<f64>,
    /// The minimizer was not unique on the search grid.
    pub tie: bool,
}

/// The strategy with vanishing instantaneous risk.
pub fn optimal_strategy(delta: &InstRiskMeasure, lambda: &[f64], z1: &[f64], z2: &[f64]) -> Result<Strategy> {
    let op = "optimal_strategy";
    delta.check_dims(z1, z2, op)?;
    if lambda.len() != z1.len() {
        return Err(PricerError::domain(MODULE, op, "lambda dimension must equal n1"));
    }
    match delta {
        InstRiskMeasure::QuadraticDelta { k, .. } => Ok(Strategy {
            h_hat: z1.iter().zip(lambda).map(|(z, l)| z + l / k).collect(),
            h: lambda.iter().map(|l| -l / k).collect(),
            tie: false,
        }),
        InstRiskMeasure::FromRho { .. } => {
            let inf = infimum(delta, lambda, z2, op)?;
            Ok(Strategy {
                h_hat: z1.iter().zip(&inf.z1).map(|(z, h)| z - h).collect(),
                h: inf.z1,
                tie: inf.tie,
            })
        }
    }
}

/// `r((H − Z¹)·λ + ρ(Z²), H − Z¹, −Z²)`.
pub fn instantaneous_risk(
    delta: &InstRiskMeasure,
    lambda: &[f64],
    h: &[f64],
    z1: &[f64],
    z2: &[f64],
    integrand: &ConvexIntegrand,
) -> Result<f64> {
    let op = "instantaneous_risk";
    delta.check_dims(z1, z2, op)?;
    if h.len() != z1.len() || lambda.len() != z1.len() || integrand.dim() != z2.len() {
        return Err(PricerError::domain(MODULE, op, "dimension mismatch"));
    }
    Ok(risk_unchecked(delta, lambda, h, z1, z2, integrand))
}

fn risk_unchecked(
    delta: &InstRiskMeasure,
    lambda: &[f64],
    h: &[f64],
    z1: &[f64],
    z2: &[f64],
    integrand: &ConvexIntegrand,
) -> f64 {
    let diff: Vec<f64> = h.iter().zip(z1).map(|(a, b)| a - b).collect();
    let neg: Vec<f64> = z2.iter().map(|z| -z).collect();
    let mu = dot(&diff, lambda) + integrand.rho_unchecked(z2);
    delta.risk(mu, &diff, &neg)
}

/// How the hedge `H` is chosen along a path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HedgeSpec {
    /// `Ĥ` from [`optimal_strategy`].
    Optimal,
    /// `H = Z¹`.
    FollowZ1,
    Constant(Vec<f64>),
}

impl HedgeSpec {
    pub fn label(&self) -> String {
        match self {
            HedgeSpec::Optimal => "optimal".into(),
            HedgeSpec::FollowZ1 => "follow_z1".into(),
            HedgeSpec::Constant(h) => format!(
                "constant({})",
                h.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub t: f64,
    pub mean_risk: f64,
    pub sd_risk: f64,
    /// Mean tracking error `V − Y` at `t`.
    pub mean_error: f64,
    /// Mean absolute difference between the realized error increment and
    /// `μΔt + (H − Z¹)·ΔW¹ − Z²·ΔW²`.
    pub mean_abs_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    pub max: f64,
}

impl Distribution {
    fn of(xs: &[f64]) -> Self {
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        let e = Estimate::from_samples(xs);
        Self {
            mean: e.mean,
            sd: e.stderr * (xs.len() as f64).sqrt(),
            min: sorted.first().copied().unwrap_or(f64::NAN),
            q05: quantile(&sorted, 0.05),
            q50: quantile(&sorted, 0.5),
            q95: quantile(&sorted, 0.95),
            max: sorted.last().copied().unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackReport {
    pub hedge: String,
    pub paths: usize,
    /// Paths dropped because `H`, `Y` or `Z` could not be evaluated.
    pub flagged_paths: usize,
    /// Steps at which the minimizer defining `Ĥ` was not unique.
    pub ties: usize,
    pub mean_risk: f64,
    pub steps: Vec<StepStats>,
    /// `V_T − ξ`.
    pub terminal_error: Distribution,
}

impl TrackReport {
    pub fn per_step_csv(&self) -> String {
        let mut out = String::from("t,mean_risk,sd_risk,mean_error\n");
        for s in &self.steps {
            out.push_str(&format!(
                "{:.6},{:.10e},{:.10e},{:.10e}\n",
                s.t, s.mean_risk, s.sd_risk, s.mean_error
            ));
        }
        out
    }
}

struct PathTrack {
    risk: Vec<f64>,
    error: Vec<f64>,
    residual: Vec<f64>,
    ties: usize,
    ok: bool,
}

/// Runs `V^H = Y₀ + Σ H·ΔS` against the solution's `Y` along every path.
pub fn tracking_simulation(
    solution: &BsdeSolution,
    hedge: &HedgeSpec,
    bundle: &PathBundle,
    delta: &InstRiskMeasure,
    integrand: &ConvexIntegrand,
    params: &MarketParams,
) -> Result<TrackReport> {
    let op = "tracking_simulation";
    if !solution.has_fields() {
        return Err(PricerError::config(
            MODULE,
            op,
            "tracking needs a solution with Y/Z fields",
        ));
    }
    let (n1, n2) = (bundle.n1(), bundle.n2());
    if delta.n1() != n1 || delta.n2() != n2 || params.n1() != n1 || solution.n1() != n1 || solution.n2() != n2 {
        return Err(PricerError::config(
            MODULE,
            op,
            "dimensions of solution, bundle and risk measure differ",
        ));
    }
    if bundle.grid() != solution.grid() {
        return Err(PricerError::config(
            MODULE,
            op,
            "bundle and solution use different time grids",
        ));
    }
    if let HedgeSpec::Constant(h) = hedge {
        if h.len() != n1 {
            return Err(PricerError::config(MODULE, op, "constant hedge must have dimension n1"));
        }
    }
    let grid = bundle.grid();
    let (n, dt) = (grid.steps(), grid.dt());
    let tracks: Vec<PathTrack> = (0..bundle.paths())
        .into_par_iter()
        .map(|m| {
            let mut t = PathTrack {
                risk: vec![0.0; n],
                error: vec![0.0; n + 1],
                residual: vec![0.0; n],
                ties: 0,
                ok: true,
            };
            let (mut z1, mut z2) = (vec![0.0; n1], vec![0.0; n2]);
            let mut v = solution.y0;
            for i in 0..n {
                let (s, w) = (bundle.s(m, i), bundle.w2(m, i));
                let lam = params.lambda_at(grid.time(i));
                if solution.z_at(i, s, w, &mut z1, &mut z2).is_err() {
                    t.ok = false;
                    break;
                }
                let h = match hedge {
                    HedgeSpec::Optimal => match optimal_strategy(delta, lam, &z1, &z2) {
                        Ok(st) => {
                            t.ties += usize::from(st.tie);
                            st.h_hat
                        }
                        Err(_) => {
                            t.ok = false;
                            break;
                        }
                    },
                    HedgeSpec::FollowZ1 => z1.clone(),
                    HedgeSpec::Constant(h) => h.clone(),
                };
                t.risk[i] = risk_unchecked(delta, lam, &h, &z1, &z2, integrand);
                let s_next = bundle.s(m, i + 1);
                v += h
                    .iter()
                    .zip(s_next.iter().zip(s))
                    .map(|(hj, (a, b))| hj * (a - b))
                    .sum::<f64>();
                let y_next = match solution.y_at(i + 1, s_next, bundle.w2(m, i + 1)) {
                    Ok(val) => val,
                    Err(_) => {
                        t.ok = false;
                        break;
                    }
                };
                let diff: Vec<f64> = h.iter().zip(&z1).map(|(a, b)| a - b).collect();
                let mu = dot(&diff, lam) + integrand.rho_unchecked(&z2);
                let predicted = mu * dt + dot(&diff, bundle.dw1(m, i)) - dot(&z2, bundle.dw2(m, i));
                let realized = (v - y_next) - t.error[i];
                t.residual[i] = (realized - predicted).abs();
                t.error[i + 1] = v - y_next;
            }
            t.ok &= t.risk.iter().chain(&t.error).chain(&t.residual).all(|x| x.is_finite());
            t
        })
        .collect();

    let good: Vec<&PathTrack> = tracks.iter().filter(|t| t.ok).collect();
    let flagged = tracks.len() - good.len();
    if good.is_empty() {
        return Err(PricerError::domain(MODULE, op, "every path was flagged"));
    }
    let steps: Vec<StepStats> = (0..n)
        .map(|i| {
            let risk: Vec<f64> = good.iter().map(|t| t.risk[i]).collect();
            let err: Vec<f64> = good.iter().map(|t| t.error[i]).collect();
            let res: Vec<f64> = good.iter().map(|t| t.residual[i]).collect();
            let e = Estimate::from_samples(&risk);
            StepStats {
                t: grid.time(i),
                mean_risk: e.mean,
                sd_risk: e.stderr * (risk.len() as f64).sqrt(),
                mean_error: mean(&err),
                mean_abs_residual: mean(&res),
            }
        })
        .collect();
    let terminal: Vec<f64> = good.iter().map(|t| t.error[n]).collect();
    let mean_risk = mean(&steps.iter().map(|s| s.mean_risk).collect::<Vec<_>>());
    Ok(TrackReport {
        hedge: hedge.label(),
        paths: tracks.len(),
        flagged_paths: flagged,
        ties: good.iter().map(|t| t.ties).sum(),
        mean_risk,
        steps,
        terminal_error: Distribution::of(&terminal),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (InstRiskMeasure, ConvexIntegrand) {
        (
            InstRiskMeasure::quadratic(1.0, &[0.2], 1).unwrap(),
            ConvexIntegrand::quadratic(1.0, 1.0, 1).unwrap(),
        )
    }

    #[test]
    fn risk_examples() {
        let (d, rho) = setup();
        let r = |h: f64| instantaneous_risk(&d, &[0.2], &[h], &[0.0], &[1.0], &rho).unwrap();
        assert!(r(0.2).abs() < 1e-15);
        assert!((r(1.0) - 0.32).abs() < 1e-14);
        assert!((r(0.0) - 0.02).abs() < 1e-15);
        let d0 = InstRiskMeasure::quadratic(1.0, &[0.0], 1).unwrap();
        assert!(
            instantaneous_risk(&d0, &[0.0], &[0.0], &[0.0], &[1.0], &rho)
                .unwrap()
                .abs()
                < 1e-15
        );
    }

    #[test]
    fn strategy_examples() {
        let (d, _) = setup();
        assert_eq!(optimal_strategy(&d, &[0.2], &[0.0], &[1.0]).unwrap().h_hat, vec![0.2]);
        let d0 = InstRiskMeasure::quadratic(1.0, &[0.0], 1).unwrap();
        assert_eq!(optimal_strategy(&d0, &[0.0], &[0.7], &[1.0]).unwrap().h_hat, vec![0.7]);
        let d2 = InstRiskMeasure::quadratic(2.0, &[0.4], 1).unwrap();
        let h = optimal_strategy(&d2, &[0.4], &[1.0], &[0.3]).unwrap().h_hat[0];
        assert!((h - 1.2).abs() < 1e-15);
    }

    #[test]
    fn delta_examples() {
        let rho = ConvexIntegrand::quadratic(1.0, 1.0, 1).unwrap();
        let d = delta_from_rho(&rho, 1.0, &[0.2]).unwrap();
        assert!((d.delta(&[0.0], &[0.0]) - 0.02).abs() < 1e-15);
        assert!((d.delta(&[1.0], &[0.0]) - 0.52).abs() < 1e-15);
        assert!((d.delta(&[0.0], &[1.0]) - 0.52).abs() < 1e-15);
    }

    #[test]
    fn rho_from_quadratic_delta() {
        let (d, _) = setup();
        let v = rho_from_delta(&d, &[0.2], &[vec![1.0], vec![0.0]]).unwrap();
        assert!((v[0] - 0.5).abs() < 1e-15);
        assert!(v[1].abs() < 1e-15);
    }

    #[test]
    fn numeric_round_trip() {
        let rho = ConvexIntegrand::quadratic(2.0, 2.0, 1).unwrap();
        let d = delta_from_rho(&rho, 2.0, &[0.3]).unwrap();
        let grid: Vec<Vec<f64>> = (-10..=10).map(|j| vec![0.3 * j as f64]).collect();
        let back = rho_from_delta(&d, &[0.3], &grid).unwrap();
        for (z, r) in grid.iter().zip(&back) {
            assert!((r - rho.rho(z).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn numeric_strategy_matches_closed_form() {
        let rho = ConvexIntegrand::quadratic(1.5, 1.5, 1).unwrap();
        let d = delta_from_rho(&rho, 1.5, &[0.25]).unwrap();
        let st = optimal_strategy(&d, &[0.25], &[0.4], &[0.8]).unwrap();
        assert!((st.h_hat[0] - (0.4 + 0.25 / 1.5)).abs() < 1e-7);
        assert!(!st.tie);
        let r = instantaneous_risk(&d, &[0.25], &st.h_hat, &[0.4], &[0.8], &rho).unwrap();
        assert!(r.abs() < 1e-9);
    }

    #[test]
    fn drift_translation() {
        let (d, _) = setup();
        let base = d.risk(0.3, &[0.1], &[-0.4]);
        assert!((d.risk(0.3 + 0.25, &[0.1], &[-0.4]) - (base - 0.25)).abs() < 1e-15);
    }

    #[test]
    fn invariants_hold_for_quadratic_family() {
        let (d, _) = setup();
        let samples: Vec<(Vec<f64>, Vec<f64>)> = (-5..=5)
            .flat_map(|a| (-5..=5).map(move |b| (vec![0.3 * a as f64], vec![0.4 * b as f64])))
            .collect();
        let inv = d.invariants(&[0.2], &samples).unwrap();
        assert!(inv.convexity_violation <= 1e-12);
        assert!(inv.monotonicity_violation <= 1e-12);
        assert!(inv.rho_at_zero.abs() < 1e-15);
    }

    proptest::proptest! {
        #[test]
        fn risk_is_nonnegative(h in -5.0f64..5.0, z1 in -5.0f64..5.0, z2 in -5.0f64..5.0, lam in -2.0f64..2.0, k in 0.2f64..5.0) {
            let d = InstRiskMeasure::quadratic(k, &[lam], 1).unwrap();
            let rho = ConvexIntegrand::quadratic(k, k, 1).unwrap();
            let r = instantaneous_risk(&d, &[lam], &[h], &[z1], &[z2], &rho).unwrap();
            proptest::prop_assert!(r >= -1e-9);
            let opt = optimal_strategy(&d, &[lam], &[z1], &[z2]).unwrap();
            let r0 = instantaneous_risk(&d, &[lam], &opt.h_hat, &[z1], &[z2], &rho).unwrap();
            proptest::prop_assert!(r0.abs() <= 1e-9);
        }
    }
}
