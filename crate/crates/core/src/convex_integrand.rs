//! The penalty integrand ρ, its convex conjugate ρ̂ and subgradient selectors.
//!
//! Two families are supported: the weighted quadratic `ρ(z) = k/2·|z|²` in any
//! dimension with closed forms for everything, and a one-dimensional table of
//! convex samples with piecewise-linear interpolation whose conjugate is
//! computed by a numeric Legendre transform.
//!
//! The growth constant `K` is part of the integrand. Pricing requires
//! `ρ(z) ≤ K/2·|z|²` and `∂ρ̂(γ) ⊆ B(0, 2|γ|/K)`, which together sandwich both
//! ρ and ρ̂ between two parabolas; [`ConvexIntegrand::check_conditions`]
//! verifies them on a sample grid.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{PricerError, Result};

const MODULE: &str = "convex_integrand";

/// Points per axis of the uniform grid used by the numeric Legendre transform.
pub const LEGENDRE_POINTS: usize = 2049;
/// Relative margin added to the conjugate search window `2|γ|/K`.
pub const LEGENDRE_MARGIN: f64 = 0.10;
/// Fenchel-Young tolerance for closed-form families.
pub const FY_TOL_CLOSED: f64 = 1e-6;
/// Fenchel-Young tolerance for tabulated families.
pub const FY_TOL_TABLE: f64 = 1e-3;

/// Tabulated convex function of one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableGrid {
    z: Vec<f64>,
    rho: Vec<f64>,
    /// `slopes[j]` is the slope on `[z[j], z[j+1]]`.
    slopes: Vec<f64>,
    left_curvature: f64,
    right_curvature: f64,
}

impl TableGrid {
    /// Builds a table from samples with strictly increasing abscissae. The
    /// samples must be convex, nonnegative, bracket zero and interpolate to
    /// `ρ(0) = 0`.
    pub fn new(z: Vec<f64>, rho: Vec<f64>) -> Result<Self> {
        let op = "table_grid";
        if z.is_empty() {
            return Err(PricerError::config(MODULE, op, "empty grid"));
        }
        if z.len() != rho.len() {
            return Err(PricerError::config(MODULE, op, "z and rho columns differ in length"));
        }
        if z.len() < 2 {
            return Err(PricerError::config(MODULE, op, "at least two samples are required"));
        }
        if z.iter().chain(rho.iter()).any(|v| !v.is_finite()) {
            return Err(PricerError::config(MODULE, op, "non-finite sample"));
        }
        if z.windows(2).any(|w| w[1] <= w[0]) {
            return Err(PricerError::config(MODULE, op, "z must be strictly increasing"));
        }
        if rho.iter().any(|&r| r < 0.0) {
            return Err(PricerError::config(MODULE, op, "rho must be nonnegative"));
        }
        if z[0] >= 0.0 || z[z.len() - 1] <= 0.0 {
            return Err(PricerError::config(MODULE, op, "grid must strictly bracket z = 0"));
        }
        let slopes: Vec<f64> = z
            .windows(2)
            .zip(rho.windows(2))
            .map(|(zw, rw)| (rw[1] - rw[0]) / (zw[1] - zw[0]))
            .collect();
        let scale = slopes.iter().fold(1.0_f64, |a, s| a.max(s.abs()));
        if slopes.windows(2).any(|s| s[1] < s[0] - 1e-12 * scale) {
            return Err(PricerError::config(MODULE, op, "samples are not convex"));
        }
        let end_curvature = |ze: f64, re: f64| if ze == 0.0 { 0.0 } else { 2.0 * re / (ze * ze) };
        let mut table = Self {
            left_curvature: end_curvature(z[0], rho[0]),
            right_curvature: end_curvature(z[z.len() - 1], rho[rho.len() - 1]),
            z,
            rho,
            slopes,
        };
        let at_zero = table.eval(0.0);
        if at_zero.abs() > 1e-12 {
            return Err(PricerError::config(
                MODULE,
                op,
                format!("rho(0) must be 0, interpolated value is {at_zero}"),
            ));
        }
        // Pin the interpolant to exactly zero at the origin.
        if let Some(j) = table.z.iter().position(|&v| v == 0.0) {
            table.rho[j] = 0.0;
        }
        Ok(table)
    }

    /// Parses a two-column `z,rho` CSV. A non-numeric first line is treated as
    /// a header; blank lines and `#` comments are skipped.
    pub fn from_csv<R: Read>(mut reader: R) -> Result<Self> {
        let op = "table_grid_csv";
        let mut text = String::new();
        reader
            .read_to_string(&mut text)
            .map_err(|e| PricerError::config(MODULE, op, format!("read failed: {e}")))?;
        let mut z = Vec::new();
        let mut rho = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 2 {
                return Err(PricerError::config(
                    MODULE,
                    op,
                    format!("line {}: expected 2 columns, found {}", lineno + 1, cols.len()),
                ));
            }
            match (cols[0].parse::<f64>(), cols[1].parse::<f64>()) {
                (Ok(a), Ok(b)) => {
                    z.push(a);
                    rho.push(b);
                }
                _ if z.is_empty() && lineno == 0 => continue,
                _ => {
                    return Err(PricerError::config(
                        MODULE,
                        op,
                        format!("line {}: cannot parse numbers", lineno + 1),
                    ))
                }
            }
        }
        Self::new(z, rho)
    }

    pub fn knots(&self) -> &[f64] {
        &self.z
    }

    fn segment(&self, x: f64) -> usize {
        // index j with z[j] <= x < z[j+1], clamped to the valid segment range
        let j = self.z.partition_point(|&v| v <= x);
        j.saturating_sub(1).min(self.slopes.len() - 1)
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.z.len();
        if x < self.z[0] {
            let d = x - self.z[0];
            return self.rho[0] + self.slopes[0] * d + 0.5 * self.left_curvature * d * d;
        }
        if x > self.z[n - 1] {
            let d = x - self.z[n - 1];
            return self.rho[n - 1] + self.slopes[n - 2] * d + 0.5 * self.right_curvature * d * d;
        }
        let j = self.segment(x);
        self.rho[j] + self.slopes[j] * (x - self.z[j])
    }

    /// Maximizer of `x·g − ρ(x)` over `x ∈ [−bound, bound]`. The objective is
    /// concave, so the unconstrained maximizer (a knot where the slopes cross
    /// `g`, or the stationary point of a quadratic tail) is clamped.
    fn conjugate_argmax(&self, g: f64, bound: f64) -> f64 {
        let n = self.z.len();
        let (first, last) = (self.slopes[0], self.slopes[n - 2]);
        let x = if g < first {
            if self.left_curvature > 0.0 {
                self.z[0] + (g - first) / self.left_curvature
            } else {
                f64::NEG_INFINITY
            }
        } else if g > last {
            if self.right_curvature > 0.0 {
                self.z[n - 1] + (g - last) / self.right_curvature
            } else {
                f64::INFINITY
            }
        } else {
            self.z[self.slopes.partition_point(|&s| s < g)]
        };
        x.clamp(-bound, bound)
    }

    /// Left and right derivatives of the interpolant at `x`.
    fn one_sided_slopes(&self, x: f64) -> (f64, f64) {
        let n = self.z.len();
        if x < self.z[0] {
            let s = self.slopes[0] + self.left_curvature * (x - self.z[0]);
            return (s, s);
        }
        if x > self.z[n - 1] {
            let s = self.slopes[n - 2] + self.right_curvature * (x - self.z[n - 1]);
            return (s, s);
        }
        match self.z.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(j) => {
                let left = if j == 0 { self.slopes[0] } else { self.slopes[j - 1] };
                let right = if j == n - 1 { self.slopes[n - 2] } else { self.slopes[j] };
                (left.min(right), right.max(left))
            }
            Err(_) => {
                let s = self.slopes[self.segment(x)];
                (s, s)
            }
        }
    }
}

/// Shape of the integrand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum IntegrandFamily {
    /// `ρ(z) = k/2·|z|²`, `ρ̂(γ) = |γ|²/(2k)`.
    QuadraticWeighted { k: f64 },
    /// One-dimensional piecewise-linear interpolant of convex samples.
    TableGrid(TableGrid),
}

/// A deterministic convex penalty integrand on `R^dim` with growth constant `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexIntegrand {
    family: IntegrandFamily,
    growth: f64,
    dim: usize,
}

/// Outcome of one inequality checked over a sample grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub holds: bool,
    /// Largest amount by which the inequality was violated (0 when it holds
    /// everywhere).
    pub worst_violation: f64,
}

impl ConditionCheck {
    fn new() -> Self {
        Self {
            holds: true,
            worst_violation: 0.0,
        }
    }

    fn record(&mut self, violation: f64, tol: f64) {
        if violation > self.worst_violation {
            self.worst_violation = violation;
        }
        if violation > tol || violation.is_nan() {
            self.holds = false;
        }
    }
}

/// Growth conditions and parabola sandwich bounds evaluated on a sample grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub growth_constant: f64,
    pub samples: usize,
    /// `ρ(z) ≤ K/2·|z|²`.
    pub quadratic_growth: ConditionCheck,
    /// `|∂ρ̂(γ)| ≤ 2|γ|/K`.
    pub conjugate_subgradient_growth: ConditionCheck,
    /// `|∂ρ(z)| ≤ K|z|` (only needed for existence of the dual optimizer).
    pub subgradient_growth: ConditionCheck,
    /// `ρ̂(γ) ≥ |γ|²/(2K)`.
    pub conjugate_lower: ConditionCheck,
    /// `ρ̂(γ) ≤ |γ|²/K`.
    pub conjugate_upper: ConditionCheck,
    /// `ρ(z) ≥ K/4·|z|²`.
    pub integrand_lower: ConditionCheck,
    /// `ρ(z) ≤ K/2·|z|²`.
    pub integrand_upper: ConditionCheck,
    /// `ρ((a+b)/2) ≤ (ρ(a)+ρ(b))/2` over consecutive sample pairs.
    pub midpoint_convexity: ConditionCheck,
}

impl ConditionReport {
    /// Both conditions required for pricing hold.
    pub fn admissible(&self) -> bool {
        self.quadratic_growth.holds && self.conjugate_subgradient_growth.holds
    }

    pub fn all_hold(&self) -> bool {
        [
            &self.quadratic_growth,
            &self.conjugate_subgradient_growth,
            &self.subgradient_growth,
            &self.conjugate_lower,
            &self.conjugate_upper,
            &self.integrand_lower,
            &self.integrand_upper,
            &self.midpoint_convexity,
        ]
        .iter()
        .all(|c| c.holds)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`.
pub fn golden_section_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut iters = 0;
    while (b - a).abs() > tol && iters < 200 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        iters += 1;
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    // The bracket endpoints may beat the midpoint on piecewise-linear objectives.
    [(x, fx), (c, fc), (d, fd)]
        .into_iter()
        .fold((x, fx), |best, cand| if cand.1 > best.1 { cand } else { best })
}

/// Numeric Legendre transform `sup_{|z| ≤ half_width} z·slope − f(z)` of a
/// convex function of one variable: a uniform grid scan followed by a
/// golden-section refinement around the best grid point. Returns the supremum
/// and the maximizer.
pub fn legendre_transform_1d(f: impl Fn(f64) -> f64, slope: f64, half_width: f64, points: usize) -> (f64, f64) {
    let points = points.max(3);
    let objective = |z: f64| z * slope - f(z);
    let step = 2.0 * half_width / (points - 1) as f64;
    let mut best_j = 0;
    let mut best = f64::NEG_INFINITY;
    for j in 0..points {
        let z = -half_width + j as f64 * step;
        let v = objective(z);
        if v > best {
            best = v;
            best_j = j;
        }
    }
    let z_best = -half_width + best_j as f64 * step;
    let lo = (z_best - step).max(-half_width);
    let hi = (z_best + step).min(half_width);
    let (z_ref, v_ref) = golden_section_max(objective, lo, hi, 1e-13 * (1.0 + half_width));
    if v_ref >= best {
        (v_ref, z_ref)
    } else {
        (best, z_best)
    }
}

impl ConvexIntegrand {
    pub fn quadratic(k: f64, growth: f64, dim: usize) -> Result<Self> {
        let op = "quadratic";
        if !(k.is_finite() && k > 0.0) {
            return Err(PricerError::config(
                MODULE,
                op,
                format!("weight k must be positive, got {k}"),
            ));
        }
        Self::validate_common(growth, dim, op)?;
        Ok(Self {
            family: IntegrandFamily::QuadraticWeighted { k },
            growth,
            dim,
        })
    }

    pub fn table(table: TableGrid, growth: f64) -> Result<Self> {
        Self::validate_common(growth, 1, "table")?;
        Ok(Self {
            family: IntegrandFamily::TableGrid(table),
            growth,
            dim: 1,
        })
    }

    pub fn new(family: IntegrandFamily, growth: f64, dim: usize) -> Result<Self> {
        match family {
            IntegrandFamily::QuadraticWeighted { k } => Self::quadratic(k, growth, dim),
            IntegrandFamily::TableGrid(t) => {
                if dim != 1 {
                    return Err(PricerError::config(
                        MODULE,
                        "new",
                        "tabulated integrands are only supported in dimension 1",
                    ));
                }
                Self::table(t, growth)
            }
        }
    }

    fn validate_common(growth: f64, dim: usize, op: &'static str) -> Result<()> {
        if !(growth.is_finite() && growth > 0.0) {
            return Err(PricerError::config(
                MODULE,
                op,
                format!("growth constant K must be positive, got {growth}"),
            ));
        }
        if dim == 0 {
            return Err(PricerError::config(MODULE, op, "dimension must be at least 1"));
        }
        Ok(())
    }

    pub fn family(&self) -> &IntegrandFamily {
        &self.family
    }

    pub fn growth(&self) -> f64 {
        self.growth
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Weight of the quadratic family, if this is one.
    pub fn quadratic_weight(&self) -> Option<f64> {
        match self.family {
            IntegrandFamily::QuadraticWeighted { k } => Some(k),
            IntegrandFamily::TableGrid(_) => None,
        }
    }

    pub fn fy_tolerance(&self) -> f64 {
        match self.family {
            IntegrandFamily::QuadraticWeighted { .. } => FY_TOL_CLOSED,
            IntegrandFamily::TableGrid(_) => FY_TOL_TABLE,
        }
    }

    fn check_input(&self, v: &[f64], op: &'static str) -> Result<()> {
        if v.len() != self.dim {
            return Err(PricerError::domain(
                MODULE,
                op,
                format!("expected dimension {}, got {}", self.dim, v.len()),
            ));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(PricerError::domain(MODULE, op, "non-finite input"));
        }
        Ok(())
    }

    /// `ρ(z)`.
    pub fn rho(&self, z: &[f64]) -> Result<f64> {
        self.check_input(z, "rho")?;
        Ok(self.rho_unchecked(z))
    }

    /// `ρ(z)` without input validation, for hot loops over finite data.
    pub(crate) fn rho_unchecked(&self, z: &[f64]) -> f64 {
        match &self.family {
            IntegrandFamily::QuadraticWeighted { k } => 0.5 * k * norm_sq(z),
            IntegrandFamily::TableGrid(t) => t.eval(z[0]),
        }
    }

    /// `ρ̂(γ) = sup_z z·γ − ρ(z)`.
    pub fn rho_hat(&self, g: &[f64]) -> Result<f64> {
        self.check_input(g, "rho_hat")?;
        Ok(self.rho_hat_unchecked(g))
    }

    pub(crate) fn rho_hat_unchecked(&self, g: &[f64]) -> f64 {
        match &self.family {
            IntegrandFamily::QuadraticWeighted { k } => norm_sq(g) / (2.0 * k),
            IntegrandFamily::TableGrid(t) => self.table_conjugate(t, g[0]).0,
        }
    }

    fn legendre_half_width(&self, g: f64) -> f64 {
        (1.0 + LEGENDRE_MARGIN) * 2.0 * g.abs() / self.growth
    }

    fn table_conjugate(&self, t: &TableGrid, g: f64) -> (f64, f64) {
        if g == 0.0 {
            return (0.0, 0.0);
        }
        let z = t.conjugate_argmax(g, self.legendre_half_width(g));
        let v = z * g - t.eval(z);
        // z = 0 is always feasible and gives 0.
        if v < 0.0 {
            (0.0, 0.0)
        } else {
            (v, z)
        }
    }

    /// One element of `∂ρ(z)`.
    pub fn subdiff_rho(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_input(z, "subdiff_rho")?;
        Ok(match &self.family {
            IntegrandFamily::QuadraticWeighted { k } => z.iter().map(|x| k * x).collect(),
            IntegrandFamily::TableGrid(t) => {
                let (lo, hi) = t.one_sided_slopes(z[0]);
                vec![0.5 * (lo + hi)]
            }
        })
    }

    /// One element of `∂ρ̂(γ)`. For tabulated integrands this is the maximizer
    /// of the Legendre problem, which is a subgradient of ρ̂ at γ.
    pub fn subdiff_rho_hat(&self, g: &[f64]) -> Result<Vec<f64>> {
        self.check_input(g, "subdiff_rho_hat")?;
        Ok(match &self.family {
            IntegrandFamily::QuadraticWeighted { k } => g.iter().map(|x| x / k).collect(),
            IntegrandFamily::TableGrid(t) => vec![self.table_conjugate(t, g[0]).1],
        })
    }

    /// Evaluates growth conditions, sandwich bounds and midpoint convexity on
    /// the given sample points (each of length `dim`). Violations are reported,
    /// never raised.
    pub fn check_conditions(&self, samples: &[Vec<f64>]) -> Result<ConditionReport> {
        let op = "check_conditions";
        if samples.is_empty() {
            return Err(PricerError::config(MODULE, op, "sample grid is empty"));
        }
        for s in samples {
            self.check_input(s, op)?;
        }
        let k_big = self.growth;
        let base_tol = match self.family {
            IntegrandFamily::QuadraticWeighted { .. } => 1e-12,
            IntegrandFamily::TableGrid(_) => FY_TOL_TABLE,
        };
        let mut report = ConditionReport {
            growth_constant: k_big,
            samples: samples.len(),
            quadratic_growth: ConditionCheck::new(),
            conjugate_subgradient_growth: ConditionCheck::new(),
            subgradient_growth: ConditionCheck::new(),
            conjugate_lower: ConditionCheck::new(),
            conjugate_upper: ConditionCheck::new(),
            integrand_lower: ConditionCheck::new(),
            integrand_upper: ConditionCheck::new(),
            midpoint_convexity: ConditionCheck::new(),
        };
        for s in samples {
            let r2 = norm_sq(s);
            let tol = base_tol * (1.0 + r2);
            let rho = self.rho_unchecked(s);
            let rho_hat = self.rho_hat_unchecked(s);
            let dr = self.subdiff_rho(s)?;
            let drh = self.subdiff_rho_hat(s)?;

            let upper = rho - 0.5 * k_big * r2;
            report.quadratic_growth.record(upper, tol);
            report.integrand_upper.record(upper, tol);
            report.integrand_lower.record(0.25 * k_big * r2 - rho, tol);
            report
                .conjugate_subgradient_growth
                .record(norm(&drh) - 2.0 * norm(s) / k_big, base_tol * (1.0 + norm(s)));
            report
                .subgradient_growth
                .record(norm(&dr) - k_big * norm(s), base_tol * (1.0 + norm(s)));
            report.conjugate_lower.record(0.5 * r2 / k_big - rho_hat, tol);
            report.conjugate_upper.record(rho_hat - r2 / k_big, tol);
        }
        for pair in samples.windows(2) {
            let mid: Vec<f64> = pair[0].iter().zip(&pair[1]).map(|(a, b)| 0.5 * (a + b)).collect();
            let gap = self.rho_unchecked(&mid) - 0.5 * (self.rho_unchecked(&pair[0]) + self.rho_unchecked(&pair[1]));
            report
                .midpoint_convexity
                .record(gap, base_tol * (1.0 + norm_sq(&pair[0]) + norm_sq(&pair[1])));
        }
        Ok(report)
    }

    /// Fenchel-Young residual `ρ(z) + ρ̂(g) − z·g`, nonnegative up to rounding
    /// and zero exactly when `g ∈ ∂ρ(z)`.
    pub fn fenchel_young_residual(&self, z: &[f64], g: &[f64]) -> Result<f64> {
        Ok(self.rho(z)? + self.rho_hat(g)? - dot(z, g))
    }
}

/// Uniform sample grid on `[-radius, radius]^dim` with `per_axis` points per
/// axis, ordered lexicographically.
pub fn sample_grid(dim: usize, radius: f64, per_axis: usize) -> Vec<Vec<f64>> {
    let per_axis = per_axis.max(2);
    let axis: Vec<f64> = (0..per_axis)
        .map(|j| -radius + 2.0 * radius * j as f64 / (per_axis - 1) as f64)
        .collect();
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&a| {
                    let mut p = prefix.clone();
                    p.push(a);
                    p
                })
            })
            .collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn quad(k: f64, growth: f64) -> ConvexIntegrand {
        ConvexIntegrand::quadratic(k, growth, 1).unwrap()
    }

    fn parabola_table(k: f64, half_width: f64, n: usize) -> TableGrid {
        let z: Vec<f64> = (0..n)
            .map(|j| -half_width + 2.0 * half_width * j as f64 / (n - 1) as f64)
            .collect();
        let rho = z.iter().map(|x| 0.5 * k * x * x).collect();
        TableGrid::new(z, rho).unwrap()
    }

    #[test]
    fn rho_examples() {
        assert_eq!(quad(1.0, 2.0).rho(&[0.0]).unwrap(), 0.0);
        assert_eq!(quad(1.0, 2.0).rho(&[2.0]).unwrap(), 2.0);
        assert_eq!(quad(0.5, 1.0).rho(&[2.0]).unwrap(), 1.0);
    }

    #[test]
    fn rho_rejects_non_finite() {
        let err = quad(1.0, 2.0).rho(&[f64::NAN]).unwrap_err();
        assert!(matches!(err, PricerError::Domain { op: "rho", .. }));
        assert!(quad(1.0, 2.0).rho(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn rho_hat_examples() {
        assert_eq!(quad(1.0, 2.0).rho_hat(&[1.0]).unwrap(), 0.5);
        assert_eq!(quad(2.0, 2.0).rho_hat(&[2.0]).unwrap(), 1.0);
        let table = ConvexIntegrand::table(parabola_table(1.0, 5.0, 101), 2.0).unwrap();
        assert_eq!(table.rho_hat(&[0.0]).unwrap(), 0.0);
        assert_eq!(quad(3.0, 4.0).rho_hat(&[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn empty_table_is_config_error() {
        let err = TableGrid::new(vec![], vec![]).unwrap_err();
        assert!(err.is_config());
    }

    #[test]
    fn table_validation() {
        assert!(TableGrid::new(vec![0.0, 1.0, 0.5], vec![0.0, 1.0, 2.0]).is_err());
        assert!(TableGrid::new(vec![-1.0, 0.0, 1.0], vec![1.0, 0.0, -1.0]).is_err());
        assert!(TableGrid::new(vec![-1.0, 0.0, 1.0], vec![0.1, 0.2, 0.1]).is_err());
        assert!(TableGrid::new(vec![1.0, 2.0], vec![0.0, 1.0]).is_err());
        assert!(TableGrid::new(vec![-1.0, 1.0], vec![0.5, 0.5]).is_err());
        assert!(TableGrid::new(vec![-1.0, 0.0, 2.0], vec![0.5, 0.0, 2.0]).is_ok());
    }

    #[test]
    fn table_csv_with_header() {
        let csv = "z,rho\n-2,2\n# comment\n0,0\n\n2,2\n";
        let t = TableGrid::from_csv(csv.as_bytes()).unwrap();
        assert_eq!(t.knots(), &[-2.0, 0.0, 2.0]);
        assert!(TableGrid::from_csv("z,rho\n1,2,3\n".as_bytes()).is_err());
        assert!(TableGrid::from_csv("z,rho\n".as_bytes()).is_err());
    }

    #[test]
    fn subdiff_examples() {
        assert_eq!(quad(1.0, 2.0).subdiff_rho(&[3.0]).unwrap(), vec![3.0]);
        assert_eq!(quad(2.0, 2.0).subdiff_rho_hat(&[4.0]).unwrap(), vec![2.0]);
        assert_eq!(quad(1.5, 2.0).subdiff_rho(&[0.0]).unwrap(), vec![0.0]);
        let table = ConvexIntegrand::table(parabola_table(1.0, 5.0, 101), 2.0).unwrap();
        assert_eq!(table.subdiff_rho(&[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn table_subgradient_at_kink_is_projected() {
        // |z| has subdifferential [-1, 1] at 0 and slopes ±1 elsewhere.
        let t = TableGrid::new(vec![-1.0, 0.0, 1.0], vec![1.0, 0.0, 1.0]).unwrap();
        let ci = ConvexIntegrand::table(t, 4.0).unwrap();
        assert_eq!(ci.subdiff_rho(&[0.0]).unwrap(), vec![0.0]);
        assert_eq!(ci.subdiff_rho(&[0.5]).unwrap(), vec![1.0]);
        assert_eq!(ci.subdiff_rho(&[-0.5]).unwrap(), vec![-1.0]);
    }

    #[test]
    fn check_conditions_examples() {
        let grid = sample_grid(1, 3.0, 61);
        let ok = quad(1.0, 2.0).check_conditions(&grid).unwrap();
        assert!(ok.all_hold(), "{ok:?}");
        let weak = quad(0.4, 2.0).check_conditions(&grid).unwrap();
        assert!(weak.quadratic_growth.holds);
        assert!(!weak.conjugate_subgradient_growth.holds);
        assert!(!weak.admissible());
        let steep = quad(3.0, 2.0).check_conditions(&grid).unwrap();
        assert!(!steep.quadratic_growth.holds);
        assert!(steep.conjugate_subgradient_growth.holds);
        assert!(!steep.subgradient_growth.holds);
        assert_abs_diff_eq!(steep.quadratic_growth.worst_violation, 0.5 * 9.0, epsilon = 1e-12);
    }

    #[test]
    fn check_conditions_two_dimensional() {
        let ci = ConvexIntegrand::quadratic(1.5, 2.0, 2).unwrap();
        let report = ci.check_conditions(&sample_grid(2, 2.0, 9)).unwrap();
        assert_eq!(report.samples, 81);
        assert!(report.all_hold());
    }

    #[test]
    fn check_conditions_empty_grid() {
        assert!(quad(1.0, 2.0).check_conditions(&[]).is_err());
    }

    #[test]
    fn table_conjugate_matches_closed_form() {
        let k = 1.3;
        let table = ConvexIntegrand::table(parabola_table(k, 6.0, 1201), 2.0).unwrap();
        for &g in &[-2.0, -0.7, 0.3, 1.0, 2.5] {
            let exact = g * g / (2.0 * k);
            // interpolation error of a parabola on spacing h is at most k h^2 / 8
            assert_abs_diff_eq!(table.rho_hat(&[g]).unwrap(), exact, epsilon = 1e-4);
            assert_abs_diff_eq!(table.subdiff_rho_hat(&[g]).unwrap()[0], g / k, epsilon = 1e-2);
        }
    }

    #[test]
    fn table_conjugate_matches_numeric_transform() {
        let z: Vec<f64> = (-30..=30).map(|j| 0.1 * j as f64).collect();
        let rho: Vec<f64> = z
            .iter()
            .map(|&x: &f64| {
                if x.abs() <= 1.0 {
                    0.5 * x * x
                } else {
                    0.5 + 1.5 * (x.abs() - 1.0) + (x.abs() - 1.0).powi(2)
                }
            })
            .collect();
        let table = TableGrid::new(z, rho).unwrap();
        let ci = ConvexIntegrand::table(table.clone(), 1.5).unwrap();
        for &g in &[-9.0, -4.2, -1.5, -1.2, -0.35, 0.0, 0.5, 1.0, 1.25, 3.7, 8.0] {
            let bound = ci.legendre_half_width(g);
            let (numeric, _) = legendre_transform_1d(|x| table.eval(x), g, bound, LEGENDRE_POINTS);
            assert_abs_diff_eq!(ci.rho_hat(&[g]).unwrap(), numeric.max(0.0), epsilon = 1e-9);
        }
    }

    #[test]
    fn table_fenchel_young_equality_at_selector() {
        let table = ConvexIntegrand::table(parabola_table(1.0, 6.0, 601), 1.5).unwrap();
        for &z in &[-1.9, -0.4, 0.0, 0.77, 1.6] {
            let g = table.subdiff_rho(&[z]).unwrap();
            let r = table.fenchel_young_residual(&[z], &g).unwrap();
            assert!((-1e-9..=FY_TOL_TABLE).contains(&r), "z={z} residual={r}");
        }
    }

    #[test]
    fn table_extrapolates_convexly() {
        let t = parabola_table(2.0, 1.0, 41);
        let ci = ConvexIntegrand::table(t, 2.5).unwrap();
        let report = ci.check_conditions(&sample_grid(1, 3.0, 121)).unwrap();
        assert!(report.midpoint_convexity.holds);
        assert!(report.quadratic_growth.holds, "{report:?}");
        assert!(ci.rho(&[3.0]).unwrap() > ci.rho(&[1.0]).unwrap());
    }

    #[test]
    fn golden_section_finds_peak() {
        let (x, fx) = golden_section_max(|x| -(x - 0.3) * (x - 0.3), -1.0, 1.0, 1e-12);
        assert_abs_diff_eq!(x, 0.3, epsilon = 1e-6);
        assert_abs_diff_eq!(fx, 0.0, epsilon = 1e-12);
    }
}
