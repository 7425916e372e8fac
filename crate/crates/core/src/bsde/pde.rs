//! Explicit finite differences for the value function.
//!
//! For one traded asset, one orthogonal factor and constant λ, `Y = u(t, S, W²)`
//! where `u_t + ½u_ss + ½u_ww + ρ(u_w) = 0`, `u(T) = g`: the drift `λu_s` of
//! the state cancels the `−Z¹λ` term of the driver. `Z¹ = u_s`, `Z² = u_w`.
//!
//! The energy inequality is evaluated with three linear companions under the
//! generator `L = λ∂_s + ½Δ` of the state under P:
//! `a_t + La + ½|∇u|² = 0`, `b_t + Lb + 2Λ²(u − B)² = 0`, `c_t + Lc = 0`
//! with `a(T) = b(T) = 0`, `c(T) = (g − B)²`, so that `a(0)`, `b(0)`, `c(0)`
//! are the three expectations in the inequality.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    check_claim, check_integrand, BsdeSolution, Diagnostics, EnergyCheck, Fields, GridInfo, SolverMethod, MODULE,
};
use crate::claims::Claim;
use crate::convex_integrand::ConvexIntegrand;
use crate::error::{PricerError, Result};
use crate::market_paths::{MarketParams, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeConfig {
    /// Half-width of the domain in units of `√T`.
    pub half_width: f64,
    /// Nodes per spatial axis.
    pub nodes: usize,
    /// Time step; `None` picks the largest stable step below `0.95·h²/2`.
    pub dt: Option<f64>,
    /// Re-solve on a grid with half the resolution to estimate the
    /// discretization error.
    pub error_estimate: bool,
    /// Drop the axis a claim does not depend on. Exact: such claims have a
    /// value function constant along that axis.
    pub reduce_dimension: bool,
}

impl Default for PdeConfig {
    fn default() -> Self {
        Self {
            half_width: 6.0,
            nodes: 401,
            dt: None,
            error_estimate: true,
            reduce_dimension: true,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    h: f64,
    n: usize,
}

impl Axis {
    fn centred(center: f64, half: f64, n: usize) -> Self {
        Self {
            lo: center - half,
            h: 2.0 * half / (n - 1) as f64,
            n,
        }
    }

    fn point(center: f64) -> Self {
        Self {
            lo: center,
            h: f64::INFINITY,
            n: 1,
        }
    }

    fn coord(&self, j: usize) -> f64 {
        if self.n == 1 {
            self.lo
        } else {
            self.lo + j as f64 * self.h
        }
    }

    /// Cell index and fractional position of `x`, clamped to the axis.
    fn locate(&self, x: f64) -> (usize, f64) {
        if self.n == 1 {
            return (0, 0.0);
        }
        let pos = ((x - self.lo) / self.h).clamp(0.0, (self.n - 1) as f64);
        let j = (pos.floor() as usize).min(self.n - 2);
        (j, pos - j as f64)
    }
}

/// `u` at every snapshot time on the node grid (s-major).
#[derive(Debug)]
pub(crate) struct NodalFields {
    s: Axis,
    w: Axis,
    snapshots: Vec<Vec<f64>>,
}

impl NodalFields {
    fn interpolate(&self, s: f64, w: f64, node: impl Fn(usize, usize) -> f64) -> f64 {
        let (js, ts) = self.s.locate(s);
        let (jw, tw) = self.w.locate(w);
        let js1 = (js + 1).min(self.s.n - 1);
        let jw1 = (jw + 1).min(self.w.n - 1);
        (1.0 - ts) * ((1.0 - tw) * node(js, jw) + tw * node(js, jw1))
            + ts * ((1.0 - tw) * node(js1, jw) + tw * node(js1, jw1))
    }

    pub(crate) fn value(&self, step: usize, s: f64, w: f64) -> f64 {
        let u = &self.snapshots[step];
        let nw = self.w.n;
        self.interpolate(s, w, |a, b| u[a * nw + b])
    }

    /// `(u_s, u_w)` from nodal differences, bilinearly interpolated.
    pub(crate) fn gradient(&self, step: usize, s: f64, w: f64) -> (f64, f64) {
        let u = &self.snapshots[step];
        let (ns, nw) = (self.s.n, self.w.n);
        let ds = |a: usize, b: usize| diff(ns, self.s.h, a, |k| u[k * nw + b]);
        let dw = |a: usize, b: usize| diff(nw, self.w.h, b, |k| u[a * nw + k]);
        (self.interpolate(s, w, ds), self.interpolate(s, w, dw))
    }
}

/// Nodal first difference along an axis: central inside, one-sided at edges.
fn diff(n: usize, h: f64, j: usize, at: impl Fn(usize) -> f64) -> f64 {
    if n == 1 {
        0.0
    } else if j == 0 {
        (at(1) - at(0)) / h
    } else if j == n - 1 {
        (at(n - 1) - at(n - 2)) / h
    } else {
        (at(j + 1) - at(j - 1)) / (2.0 * h)
    }
}

struct RunOutput {
    y0: f64,
    energy: EnergyCheck,
    y_max: f64,
    dt: f64,
    time_steps: usize,
    snapshots: Vec<Vec<f64>>,
    s: Axis,
    w: Axis,
}

struct Problem<'a> {
    claim: &'a Claim,
    integrand: &'a ConvexIntegrand,
    lambda: f64,
    lambda_bound: f64,
    s0: f64,
    grid: TimeGrid,
}

/// Solves the value-function PDE and returns `Y₀ = u(0, S₀, 0)` together with
/// nodal `Y`/`Z` fields at the times of `grid`.
pub fn solve_pde_fd(
    claim: &Claim,
    integrand: &ConvexIntegrand,
    params: &MarketParams,
    grid: TimeGrid,
    cfg: &PdeConfig,
) -> Result<BsdeSolution> {
    let op = "solve_pde_fd";
    check_claim(claim, params, op)?;
    check_integrand(integrand, params, op)?;
    if params.n1() != 1 || params.n2() != 1 {
        return Err(PricerError::config(MODULE, op, "the PDE solver needs n1 = n2 = 1"));
    }
    let lambda = params
        .constant_lambda()
        .ok_or_else(|| PricerError::config(MODULE, op, "the PDE solver needs a constant drift"))?[0];
    if cfg.nodes < 5 || !(cfg.half_width > 0.0 && cfg.half_width.is_finite()) {
        return Err(PricerError::config(
            MODULE,
            op,
            "need at least 5 nodes and a positive half-width",
        ));
    }
    let problem = Problem {
        claim,
        integrand,
        lambda,
        lambda_bound: params.lambda_bound(),
        s0: params.s0()[0],
        grid,
    };
    let fine = run(&problem, cfg, cfg.nodes, true)?;
    let truncation_estimate = if cfg.error_estimate && cfg.nodes >= 9 {
        let coarse = run(&problem, cfg, (cfg.nodes - 1) / 2 + 1, false)?;
        Some((fine.y0 - coarse.y0).abs())
    } else {
        None
    };
    let bound = claim.bound();
    let diagnostics = Diagnostics {
        method: SolverMethod::PdeFd,
        y0: fine.y0,
        stderr: 0.0,
        truncation_rate: 0.0,
        truncation_activations: 0,
        iterations: fine.time_steps,
        grid: GridInfo {
            steps: grid.steps(),
            horizon: grid.horizon(),
            paths: None,
            nodes: Some([fine.s.n, fine.w.n]),
            pde_dt: Some(fine.dt),
        },
        condition_numbers: Vec::new(),
        truncation_estimate,
        y_margin: fine.y_max - bound,
        energy: fine.energy,
        warnings: Vec::new(),
    };
    Ok(BsdeSolution {
        method: SolverMethod::PdeFd,
        y0: fine.y0,
        stderr: 0.0,
        diagnostics,
        grid,
        n1: 1,
        n2: 1,
        claim: claim.clone(),
        s0: vec![problem.s0],
        fields: std::sync::Arc::new(Fields::Nodal(NodalFields {
            s: fine.s,
            w: fine.w,
            snapshots: fine.snapshots,
        })),
    })
}

fn run(p: &Problem<'_>, cfg: &PdeConfig, nodes: usize, keep: bool) -> Result<RunOutput> {
    let op = "solve_pde_fd";
    let horizon = p.grid.horizon();
    let half = cfg.half_width * horizon.sqrt();
    let reduce = cfg.reduce_dimension;
    let s_axis = if reduce && p.claim.depends_on_w2_only() {
        Axis::point(p.s0)
    } else {
        Axis::centred(p.s0, half, nodes)
    };
    let w_axis = if reduce && p.claim.depends_on_s_only() {
        Axis::point(0.0)
    } else {
        Axis::centred(0.0, half, nodes)
    };
    let h = s_axis.h.min(w_axis.h);
    let limit = 0.5 * h * h;
    if let Some(dt) = cfg.dt {
        if dt.is_nan() || dt <= 0.0 {
            return Err(PricerError::config(MODULE, op, "time step must be positive"));
        }
        if dt > limit {
            return Err(PricerError::Cfl { dt, limit });
        }
    }
    let target = cfg.dt.unwrap_or(0.95 * limit);
    let interval = p.grid.dt();
    let substeps = if target.is_finite() {
        (interval / target).ceil().max(1.0) as usize
    } else {
        1
    };
    let dt = interval / substeps as f64;

    let (ns, nw) = (s_axis.n, w_axis.n);
    let size = ns * nw;
    let bound = p.claim.bound();
    let mut u = vec![0.0; size];
    let mut c = vec![0.0; size];
    for js in 0..ns {
        for jw in 0..nw {
            let g = p.claim.payoff(&[s_axis.coord(js)], &[w_axis.coord(jw)], &[p.s0]);
            u[js * nw + jw] = g;
            c[js * nw + jw] = (g - bound).powi(2);
        }
    }
    let mut a = vec![0.0; size];
    let mut b = vec![0.0; size];
    let mut y_max = u.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let n = p.grid.steps();
    let mut snapshots = if keep { vec![Vec::new(); n + 1] } else { Vec::new() };
    if keep {
        snapshots[n] = u.clone();
    }
    let mut next = [vec![0.0; size], vec![0.0; size], vec![0.0; size], vec![0.0; size]];
    let coef = StepCoefficients {
        dt,
        hs: s_axis.h,
        hw: w_axis.h,
        ns,
        nw,
        lambda: p.lambda,
        two_lambda_sq: 2.0 * p.lambda_bound * p.lambda_bound,
        bound,
    };
    for i in (0..n).rev() {
        for _ in 0..substeps {
            step(&coef, p.integrand, [&u, &a, &b, &c], &mut next);
            std::mem::swap(&mut u, &mut next[0]);
            std::mem::swap(&mut a, &mut next[1]);
            std::mem::swap(&mut b, &mut next[2]);
            std::mem::swap(&mut c, &mut next[3]);
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(PricerError::domain(
                MODULE,
                op,
                format!("solution blew up before t = {}", p.grid.time(i)),
            ));
        }
        y_max = u.iter().fold(y_max, |m, v| m.max(v.abs()));
        if keep {
            snapshots[i] = u.clone();
        }
    }
    let fields = NodalFields {
        s: s_axis,
        w: w_axis,
        snapshots: vec![u, a, b, c],
    };
    let at0 = |k: usize| {
        let f = &fields.snapshots[k];
        fields.interpolate(p.s0, 0.0, |x, y| f[x * nw + y])
    };
    let (y0, lhs, running, terminal) = (at0(0), at0(1), at0(2), at0(3));
    Ok(RunOutput {
        y0,
        energy: EnergyCheck::new(lhs, terminal, running),
        y_max,
        dt,
        time_steps: n * substeps,
        snapshots,
        s: s_axis,
        w: w_axis,
    })
}

struct StepCoefficients {
    dt: f64,
    hs: f64,
    hw: f64,
    ns: usize,
    nw: usize,
    lambda: f64,
    two_lambda_sq: f64,
    bound: f64,
}

/// One backward Euler-explicit step of `u` and the three companions.
fn step(k: &StepCoefficients, integrand: &ConvexIntegrand, cur: [&Vec<f64>; 4], next: &mut [Vec<f64>; 4]) {
    let (ns, nw) = (k.ns, k.nw);
    let [u, a, b, c] = cur;
    let [un, an, bn, cn] = next;
    let s_lo = usize::from(ns > 1);
    let w_lo = usize::from(nw > 1);
    let (s_hi, w_hi) = (ns - s_lo, nw - w_lo);
    let (inv2hs, invhs2) = (0.5 / k.hs, 1.0 / (k.hs * k.hs));
    let (inv2hw, invhw2) = (0.5 / k.hw, 1.0 / (k.hw * k.hw));
    un.par_chunks_mut(nw)
        .zip(an.par_chunks_mut(nw))
        .zip(bn.par_chunks_mut(nw))
        .zip(cn.par_chunks_mut(nw))
        .enumerate()
        .for_each(|(js, (((ur, ar), br), cr))| {
            if js < s_lo || js >= s_hi {
                return;
            }
            for jw in w_lo..w_hi {
                let i = js * nw + jw;
                // first and second differences of field f at node i
                let d = |f: &Vec<f64>| -> (f64, f64, f64, f64) {
                    let (fs, fss) = if ns > 1 {
                        let (p, m) = (f[i + nw], f[i - nw]);
                        ((p - m) * inv2hs, (p - 2.0 * f[i] + m) * invhs2)
                    } else {
                        (0.0, 0.0)
                    };
                    let (fw, fww) = if nw > 1 {
                        let (p, m) = (f[i + 1], f[i - 1]);
                        ((p - m) * inv2hw, (p - 2.0 * f[i] + m) * invhw2)
                    } else {
                        (0.0, 0.0)
                    };
                    (fs, fss, fw, fww)
                };
                let (us, uss, uw, uww) = d(u);
                ur[jw] = u[i] + k.dt * (0.5 * (uss + uww) + integrand.rho_unchecked(&[uw]));
                let (as_, ass, _, aww) = d(a);
                ar[jw] = a[i] + k.dt * (k.lambda * as_ + 0.5 * (ass + aww) + 0.5 * (us * us + uw * uw));
                let (bs, bss, _, bww) = d(b);
                let dev = u[i] - k.bound;
                br[jw] = b[i] + k.dt * (k.lambda * bs + 0.5 * (bss + bww) + k.two_lambda_sq * dev * dev);
                let (cs, css, _, cww) = d(c);
                cr[jw] = c[i] + k.dt * (k.lambda * cs + 0.5 * (css + cww));
            }
        });
    for f in next.iter_mut() {
        extrapolate_edges(f, ns, nw);
    }
}

/// Linear extrapolation onto the boundary nodes: first the `w` edges of the
/// interior rows, then the full `s` edge rows (which fixes the corners).
fn extrapolate_edges(f: &mut [f64], ns: usize, nw: usize) {
    if nw > 1 {
        let rows = if ns > 1 { 1..ns - 1 } else { 0..1 };
        for js in rows {
            let r = js * nw;
            f[r] = 2.0 * f[r + 1] - f[r + 2];
            f[r + nw - 1] = 2.0 * f[r + nw - 2] - f[r + nw - 3];
        }
    }
    if ns > 1 {
        for jw in 0..nw {
            f[jw] = 2.0 * f[nw + jw] - f[2 * nw + jw];
            let last = (ns - 1) * nw + jw;
            f[last] = 2.0 * f[last - nw] - f[last - 2 * nw];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::claims::{JointPayoff, W2Payoff};

    fn small() -> PdeConfig {
        PdeConfig {
            nodes: 161,
            ..PdeConfig::default()
        }
    }

    #[test]
    fn constant_claim_is_exact() {
        let p = MarketParams::scalar(2.0, 0.2).unwrap();
        let rho = ConvexIntegrand::quadratic(1.0, 1.0, 1).unwrap();
        let grid = TimeGrid::new(1.0, 10).unwrap();
        for reduce in [true, false] {
            let cfg = PdeConfig {
                nodes: 41,
                reduce_dimension: reduce,
                ..PdeConfig::default()
            };
            let sol = solve_pde_fd(&Claim::constant(-2.0).unwrap(), &rho, &p, grid, &cfg).unwrap();
            assert!((sol.y0 + 2.0).abs() < 1e-10);
            assert!((sol.y_at(3, &[0.0], &[1.0]).unwrap() + 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn identity_claim_matches_closed_form() {
        let p = MarketParams::scalar(0.0, 0.2).unwrap();
        let grid = TimeGrid::new(1.0, 20).unwrap();
        let claim = Claim::terminal_w2(W2Payoff::Identity, 1.0).unwrap();
        for k in [1.0, 2.0] {
            let rho = ConvexIntegrand::quadratic(k, k, 1).unwrap();
            let sol = solve_pde_fd(&claim, &rho, &p, grid, &small()).unwrap();
            assert!((sol.y0 - k / 2.0).abs() < 1e-3, "k = {k}: {}", sol.y0);
            let (mut z1, mut z2) = ([0.0], [0.0]);
            sol.z_at(7, &[0.3], &[0.5], &mut z1, &mut z2).unwrap();
            assert!((z2[0] - 1.0).abs() < 1e-6 && z1[0] == 0.0);
            assert!(sol.diagnostics.energy.holds);
        }
    }

    #[test]
    fn full_grid_agrees_with_reduced_grid() {
        let p = MarketParams::scalar(0.0, 0.2).unwrap();
        let grid = TimeGrid::new(1.0, 5).unwrap();
        let claim = Claim::terminal_w2(W2Payoff::Cos, 1.0).unwrap();
        let rho = ConvexIntegrand::quadratic(1.0, 1.0, 1).unwrap();
        let full = PdeConfig {
            nodes: 81,
            reduce_dimension: false,
            error_estimate: false,
            ..PdeConfig::default()
        };
        let reduced = PdeConfig {
            reduce_dimension: true,
            ..full
        };
        let a = solve_pde_fd(&claim, &rho, &p, grid, &full).unwrap();
        let b = solve_pde_fd(&claim, &rho, &p, grid, &reduced).unwrap();
        assert!((a.y0 - b.y0).abs() < 1e-9, "{} vs {}", a.y0, b.y0);
    }

    #[test]
    fn spot_claim_prices_at_spot() {
        let p = MarketParams::scalar(1.5, 0.2).unwrap();
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let rho = ConvexIntegrand::quadratic(1.0, 1.0, 1).unwrap();
        let claim = Claim::terminal_joint(JointPayoff::Linear { a: 1.0, b: 0.0 }, 50.0).unwrap();
        let sol = solve_pde_fd(&claim, &rho, &p, grid, &small()).unwrap();
        assert!((sol.y0 - 1.5).abs() < 1e-3);
    }

    #[test]
    fn cfl_violation_is_a_config_error() {
        let p = MarketParams::scalar(0.0, 0.0).unwrap();
        let rho = ConvexIntegrand::quadratic(1.0, 1.0, 1).unwrap();
        let claim = Claim::terminal_w2(W2Payoff::Cos, 1.0).unwrap();
        let cfg = PdeConfig {
            nodes: 101,
            dt: Some(0.01),
            ..PdeConfig::default()
        };
        let err = solve_pde_fd(&claim, &rho, &p, TimeGrid::new(1.0, 4).unwrap(), &cfg).unwrap_err();
        assert!(matches!(err, PricerError::Cfl { .. }) && err.is_config());
    }

    #[test]
    fn rejects_multidimensional_markets() {
        let p = MarketParams::new(vec![0.0], crate::market_paths::Drift::Constant(vec![0.0]), 2).unwrap();
        let rho = ConvexIntegrand::quadratic(1.0, 1.0, 2).unwrap();
        let err = solve_pde_fd(
            &Claim::constant(1.0).unwrap(),
            &rho,
            &p,
            TimeGrid::new(1.0, 4).unwrap(),
            &small(),
        );
        assert!(err.unwrap_err().is_config());
    }
}
