//! Gaussian expectations by quadrature.
//!
//! Nodes and weights come from the Golub-Welsch eigenproblem of the Jacobi
//! matrix. Smooth integrands use Gauss-Hermite (probabilists' weight, so the
//! weights sum to one); integrands with known kinks or jumps use composite
//! Gauss-Legendre panels split at those points, because Hermite rules only
//! converge algebraically across a kink.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

/// Nodes and weights of a Gauss rule.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn golub_welsch(diag: &[f64], offdiag: &[f64], mass: f64) -> GaussRule {
    let n = diag.len();
    let mut j = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        j[(i, i)] = diag[i];
        if i + 1 < n {
            j[(i, i + 1)] = offdiag[i];
            j[(i + 1, i)] = offdiag[i];
        }
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mass * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    GaussRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Gauss-Hermite rule for `E[f(X)]`, `X ~ N(0, 1)`.
pub fn gauss_hermite(n: usize) -> GaussRule {
    let n = n.max(1);
    let off: Vec<f64> = (1..n).map(|i| (i as f64).sqrt()).collect();
    golub_welsch(&vec![0.0; n], &off, 1.0)
}

/// Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> GaussRule {
    let n = n.max(1);
    let off: Vec<f64> = (1..n)
        .map(|i| {
            let i = i as f64;
            i / (4.0 * i * i - 1.0).sqrt()
        })
        .collect();
    golub_welsch(&vec![0.0; n], &off, 2.0)
}

/// Quadrature settings for Gaussian expectations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadConfig {
    /// Gauss-Hermite nodes for smooth integrands.
    pub hermite_nodes: usize,
    /// Gauss-Legendre order per panel for piecewise-smooth integrands.
    pub legendre_order: usize,
    /// Panels across the truncated range, before splitting at breakpoints.
    pub panels: usize,
    /// The truncated range is `±sigmas` standard deviations.
    pub sigmas: f64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            hermite_nodes: 96,
            legendre_order: 20,
            panels: 96,
            sigmas: 12.0,
        }
    }
}

/// `log E[exp(h(σX))]`, `X ~ N(0,1)`, evaluated stably. `breakpoints` are
/// points (in the units of `σX`) where `h` is not smooth; when any lies
/// inside the truncated range the composite Legendre rule is used.
pub fn log_gaussian_mgf(h: impl Fn(f64) -> f64, sigma: f64, breakpoints: &[f64], cfg: &QuadConfig) -> f64 {
    let (xs, ws) = gaussian_nodes(sigma, breakpoints, cfg);
    let vals: Vec<f64> = xs.iter().map(|&x| h(x)).collect();
    let peak = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return peak;
    }
    let acc: f64 = vals.iter().zip(&ws).map(|(v, w)| w * (v - peak).exp()).sum();
    peak + acc.ln()
}

/// `E[f(σX)]`, `X ~ N(0,1)`.
pub fn gaussian_expectation(f: impl Fn(f64) -> f64, sigma: f64, breakpoints: &[f64], cfg: &QuadConfig) -> f64 {
    let (xs, ws) = gaussian_nodes(sigma, breakpoints, cfg);
    xs.iter().zip(&ws).map(|(&x, w)| w * f(x)).sum()
}

/// Nodes (already scaled by σ) and weights (summing to about one) for a
/// Gaussian expectation.
fn gaussian_nodes(sigma: f64, breakpoints: &[f64], cfg: &QuadConfig) -> (Vec<f64>, Vec<f64>) {
    if sigma == 0.0 {
        return (vec![0.0], vec![1.0]);
    }
    let range = cfg.sigmas * sigma;
    let mut cuts: Vec<f64> = breakpoints.iter().copied().filter(|b| b.abs() < range).collect();
    if cuts.is_empty() {
        let rule = gauss_hermite(cfg.hermite_nodes);
        return (rule.nodes.iter().map(|x| sigma * x).collect(), rule.weights);
    }
    cuts.extend([-range, range]);
    let width = 2.0 * range / cfg.panels.max(1) as f64;
    let mut k = 0;
    while k as f64 * width < 2.0 * range {
        cuts.push(-range + k as f64 * width);
        k += 1;
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14 * range);
    let rule = gauss_legendre(cfg.legendre_order);
    let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let mut xs = Vec::new();
    let mut ws = Vec::new();
    for pair in cuts.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (t, w) in rule.nodes.iter().zip(&rule.weights) {
            let x = mid + half * t;
            xs.push(x);
            ws.push(w * half * norm * (-0.5 * (x / sigma).powi(2)).exp());
        }
    }
    (xs, ws)
}
