//! Simulation of the arithmetic market `S = S₀ + ∫λ dt + W¹` together with the
//! orthogonal factor `W²`, and measure changes through stochastic exponentials
//! `q = ℰ(−λ·W¹ + γ·W²)`.

use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{PricerError, Result};

const MODULE: &str = "market_paths";

/// Upper bound on the number of `f64` values a bundle may hold (2 GiB).
pub const MAX_BUNDLE_VALUES: usize = 1 << 28;
/// Largest tolerated fraction of paths whose density overflowed.
pub const MAX_FLAGGED_FRACTION: f64 = 1e-3;
const LOG_DENSITY_LIMIT: f64 = 700.0;

/// Uniform grid `t_i = i·T/N`, `i = 0..=N`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(PricerError::config(
                MODULE,
                "time_grid",
                format!("horizon must be positive, got {horizon}"),
            ));
        }
        if steps == 0 {
            return Err(PricerError::config(
                MODULE,
                "time_grid",
                "at least one step is required",
            ));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Grid time `t_i`; the last node is exactly the horizon.
    pub fn time(&self, i: usize) -> f64 {
        if i >= self.steps {
            self.horizon
        } else {
            i as f64 * self.dt()
        }
    }
}

/// Deterministic market price of risk `λ(t)`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Drift {
    Constant(Vec<f64>),
    /// `values[j]` applies on `[breaks[j], breaks[j+1])`; `breaks[0]` must be 0.
    Piecewise {
        breaks: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

/// Dimensions, initial prices and drift of the market.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MarketParams {
    s0: Vec<f64>,
    drift: Drift,
    n2: usize,
}

impl MarketParams {
    pub fn new(s0: Vec<f64>, drift: Drift, n2: usize) -> Result<Self> {
        let op = "market_params";
        let n1 = s0.len();
        if n1 == 0 || n2 == 0 {
            return Err(PricerError::config(
                MODULE,
                op,
                "both factor dimensions must be at least 1",
            ));
        }
        if s0.iter().any(|v| !v.is_finite()) {
            return Err(PricerError::config(MODULE, op, "S0 must be finite"));
        }
        match &drift {
            Drift::Constant(l) => {
                if l.len() != n1 {
                    return Err(PricerError::config(MODULE, op, "lambda dimension must equal n1"));
                }
                if l.iter().any(|v| !v.is_finite()) {
                    return Err(PricerError::config(MODULE, op, "lambda must be bounded"));
                }
            }
            Drift::Piecewise { breaks, values } => {
                if breaks.is_empty() || breaks.len() != values.len() || breaks[0] != 0.0 {
                    return Err(PricerError::config(
                        MODULE,
                        op,
                        "piecewise drift needs matching breaks/values starting at t = 0",
                    ));
                }
                if breaks.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(PricerError::config(MODULE, op, "drift breaks must be increasing"));
                }
                if values.iter().any(|v| v.len() != n1 || v.iter().any(|x| !x.is_finite())) {
                    return Err(PricerError::config(
                        MODULE,
                        op,
                        "drift values must be finite vectors of length n1",
                    ));
                }
            }
        }
        Ok(Self { s0, drift, n2 })
    }

    /// One traded asset, one orthogonal factor, constant drift.
    pub fn scalar(s0: f64, lambda: f64) -> Result<Self> {
        Self::new(vec![s0], Drift::Constant(vec![lambda]), 1)
    }

    pub fn n1(&self) -> usize {
        self.s0.len()
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn s0(&self) -> &[f64] {
        &self.s0
    }

    pub fn drift(&self) -> &Drift {
        &self.drift
    }

    pub fn lambda_at(&self, t: f64) -> &[f64] {
        match &self.drift {
            Drift::Constant(l) => l,
            Drift::Piecewise { breaks, values } => {
                let j = breaks.partition_point(|&b| b <= t).saturating_sub(1);
                &values[j]
            }
        }
    }

    /// `Λ = sup_t |λ(t)|`.
    pub fn lambda_bound(&self) -> f64 {
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        match &self.drift {
            Drift::Constant(l) => norm(l),
            Drift::Piecewise { values, .. } => values.iter().map(|v| norm(v)).fold(0.0, f64::max),
        }
    }

    pub fn constant_lambda(&self) -> Option<&[f64]> {
        match &self.drift {
            Drift::Constant(l) => Some(l),
            Drift::Piecewise { .. } => None,
        }
    }

    /// Same market with a different constant drift.
    pub fn with_constant_lambda(&self, lambda: Vec<f64>) -> Result<Self> {
        Self::new(self.s0.clone(), Drift::Constant(lambda), self.n2)
    }
}

/// Simulated Brownian increments and the derived price and `W²` paths.
///
/// Layouts are path-major: increments are `[M][N][n]`, levels `[M][N+1][n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    seed: u64,
    paths: usize,
    grid: TimeGrid,
    n1: usize,
    n2: usize,
    dw1: Vec<f64>,
    dw2: Vec<f64>,
    s: Vec<f64>,
    w2: Vec<f64>,
}

impl PathBundle {
    /// Builds a bundle from given increments, reconstructing `S` and `W²`.
    pub fn from_increments(
        params: &MarketParams,
        grid: TimeGrid,
        seed: u64,
        paths: usize,
        dw1: Vec<f64>,
        dw2: Vec<f64>,
    ) -> Result<Self> {
        let (n1, n2, n) = (params.n1(), params.n2(), grid.steps());
        if dw1.len() != paths * n * n1 || dw2.len() != paths * n * n2 {
            return Err(PricerError::config(
                MODULE,
                "from_increments",
                "increment arrays have the wrong length",
            ));
        }
        check_capacity(paths, n, n1, n2, "from_increments")?;
        let mut bundle = Self {
            seed,
            paths,
            grid,
            n1,
            n2,
            dw1,
            dw2,
            s: vec![0.0; paths * (n + 1) * n1],
            w2: vec![0.0; paths * (n + 1) * n2],
        };
        bundle.rebuild_levels(params);
        Ok(bundle)
    }

    fn rebuild_levels(&mut self, params: &MarketParams) {
        let (n1, n2, n) = (self.n1, self.n2, self.grid.steps());
        let grid = self.grid;
        let dt = grid.dt();
        self.s
            .par_chunks_mut((n + 1) * n1)
            .zip(self.w2.par_chunks_mut((n + 1) * n2))
            .zip(self.dw1.par_chunks(n * n1))
            .zip(self.dw2.par_chunks(n * n2))
            .for_each(|(((s, w2), dw1), dw2)| {
                s[..n1].copy_from_slice(params.s0());
                w2[..n2].fill(0.0);
                for i in 0..n {
                    let lam = params.lambda_at(grid.time(i));
                    for j in 0..n1 {
                        s[(i + 1) * n1 + j] = s[i * n1 + j] + lam[j] * dt + dw1[i * n1 + j];
                    }
                    for j in 0..n2 {
                        w2[(i + 1) * n2 + j] = w2[i * n2 + j] + dw2[i * n2 + j];
                    }
                }
            });
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    /// `ΔW¹` at path `m`, step `i`.
    pub fn dw1(&self, m: usize, i: usize) -> &[f64] {
        let o = (m * self.grid.steps() + i) * self.n1;
        &self.dw1[o..o + self.n1]
    }

    pub fn dw2(&self, m: usize, i: usize) -> &[f64] {
        let o = (m * self.grid.steps() + i) * self.n2;
        &self.dw2[o..o + self.n2]
    }

    /// `S` at path `m`, grid node `i`.
    pub fn s(&self, m: usize, i: usize) -> &[f64] {
        let o = (m * (self.grid.steps() + 1) + i) * self.n1;
        &self.s[o..o + self.n1]
    }

    pub fn w2(&self, m: usize, i: usize) -> &[f64] {
        let o = (m * (self.grid.steps() + 1) + i) * self.n2;
        &self.w2[o..o + self.n2]
    }

    pub fn terminal_s(&self, m: usize) -> &[f64] {
        self.s(m, self.grid.steps())
    }

    pub fn terminal_w2(&self, m: usize) -> &[f64] {
        self.w2(m, self.grid.steps())
    }

    pub fn increments_w1(&self) -> &[f64] {
        &self.dw1
    }

    pub fn increments_w2(&self) -> &[f64] {
        &self.dw2
    }

    /// Writes the bundle in the portable binary layout: a header of six
    /// little-endian 64-bit values (seed, M, N, n1, n2 as unsigned integers,
    /// T as an IEEE double) followed, path by path and step by step, by the
    /// `n1` components of `ΔW¹` and then the `n2` components of `ΔW²`.
    pub fn write_binary<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.grid.steps();
        for v in [self.seed, self.paths as u64, n as u64, self.n1 as u64, self.n2 as u64] {
            out.write_all(&v.to_le_bytes())?;
        }
        out.write_all(&self.grid.horizon().to_le_bytes())?;
        for m in 0..self.paths {
            for i in 0..n {
                for v in self.dw1(m, i).iter().chain(self.dw2(m, i)) {
                    out.write_all(&v.to_le_bytes())?;
                }
            }
        }
        out.flush()
    }

    /// Reads a bundle written by [`PathBundle::write_binary`]. The market must
    /// match the stored dimensions.
    pub fn read_binary<R: Read>(mut input: R, params: &MarketParams) -> Result<Self> {
        let op = "read_binary";
        let io = |e: std::io::Error| PricerError::config(MODULE, op, format!("read failed: {e}"));
        let mut word = [0u8; 8];
        let mut header = [0u64; 5];
        for h in header.iter_mut() {
            input.read_exact(&mut word).map_err(io)?;
            *h = u64::from_le_bytes(word);
        }
        input.read_exact(&mut word).map_err(io)?;
        let horizon = f64::from_le_bytes(word);
        let [seed, paths, steps, n1, n2] = header;
        let (paths, steps, n1, n2) = (paths as usize, steps as usize, n1 as usize, n2 as usize);
        if n1 != params.n1() || n2 != params.n2() {
            return Err(PricerError::config(
                MODULE,
                op,
                "bundle dimensions do not match the market",
            ));
        }
        let grid = TimeGrid::new(horizon, steps)?;
        check_capacity(paths, steps, n1, n2, op)?;
        let mut dw1 = Vec::with_capacity(paths * steps * n1);
        let mut dw2 = Vec::with_capacity(paths * steps * n2);
        for _ in 0..paths * steps {
            for _ in 0..n1 {
                input.read_exact(&mut word).map_err(io)?;
                dw1.push(f64::from_le_bytes(word));
            }
            for _ in 0..n2 {
                input.read_exact(&mut word).map_err(io)?;
                dw2.push(f64::from_le_bytes(word));
            }
        }
        Self::from_increments(params, grid, seed, paths, dw1, dw2)
    }
}

fn check_capacity(paths: usize, steps: usize, n1: usize, n2: usize, op: &'static str) -> Result<()> {
    let values = paths
        .checked_mul(steps + 1)
        .and_then(|v| v.checked_mul(2 * (n1 + n2)))
        .unwrap_or(usize::MAX);
    if values > MAX_BUNDLE_VALUES {
        return Err(PricerError::capacity(
            MODULE,
            op,
            format!("{paths} paths x {steps} steps needs {values} values, limit is {MAX_BUNDLE_VALUES}"),
        ));
    }
    Ok(())
}

/// Simulates `paths` independent paths under P.
///
/// Path `m` draws from its own ChaCha8 stream (`seed`, stream `m`), consuming
/// normals in (step, component) order with the `W¹` components first, so the
/// result does not depend on how paths are scheduled across threads.
pub fn simulate(params: &MarketParams, grid: TimeGrid, paths: usize, seed: u64) -> Result<PathBundle> {
    if paths == 0 {
        return Err(PricerError::config(MODULE, "simulate", "at least one path is required"));
    }
    let (n1, n2, n) = (params.n1(), params.n2(), grid.steps());
    check_capacity(paths, n, n1, n2, "simulate")?;
    let sd = grid.dt().sqrt();
    let mut dw1 = vec![0.0; paths * n * n1];
    let mut dw2 = vec![0.0; paths * n * n2];
    dw1.par_chunks_mut(n * n1)
        .zip(dw2.par_chunks_mut(n * n2))
        .enumerate()
        .for_each(|(m, (a, b))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(m as u64);
            for i in 0..n {
                for v in &mut a[i * n1..(i + 1) * n1] {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v = sd * z;
                }
                for v in &mut b[i * n2..(i + 1) * n2] {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v = sd * z;
                }
            }
        });
    PathBundle::from_increments(params, grid, seed, paths, dw1, dw2)
}

/// A `γ` process given as a function of the current state. Implementations
/// must be pure: the same arguments always yield the same output.
pub trait GammaField: Send + Sync {
    /// Writes `γ(t_step, S, W²)` into `out` (length `n2`).
    fn eval(&self, step: usize, t: f64, s: &[f64], w2: &[f64], out: &mut [f64]);
}

type TimeFn = dyn Fn(f64, &mut [f64]) + Send + Sync;

/// How the orthogonal kernel `γ` of a martingale measure is specified.
#[derive(Clone)]
pub enum GammaSpec {
    /// `γ = 0`, the minimal martingale measure.
    Zero,
    Constant(Vec<f64>),
    Deterministic(Arc<TimeFn>),
    StateFeedback(Arc<dyn GammaField>),
}

/// A martingale measure `Q` with density `ℰ(−λ·W¹ + γ·W²)`.
#[derive(Clone)]
pub struct MeasureSpec {
    label: String,
    gamma: GammaSpec,
}

impl fmt::Debug for MeasureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MeasureSpec").field("label", &self.label).finish()
    }
}

impl MeasureSpec {
    pub fn minimal() -> Self {
        Self {
            label: "qmin".into(),
            gamma: GammaSpec::Zero,
        }
    }

    pub fn constant(gamma: Vec<f64>) -> Self {
        let label = format!(
            "const({})",
            gamma.iter().map(|g| format!("{g}")).collect::<Vec<_>>().join(";")
        );
        Self {
            label,
            gamma: GammaSpec::Constant(gamma),
        }
    }

    /// `γ(t) = slope·t`.
    pub fn ramp(slope: Vec<f64>) -> Self {
        let label = format!(
            "ramp({})",
            slope.iter().map(|g| format!("{g}")).collect::<Vec<_>>().join(";")
        );
        let f = move |t: f64, out: &mut [f64]| {
            for (o, a) in out.iter_mut().zip(&slope) {
                *o = a * t;
            }
        };
        Self {
            label,
            gamma: GammaSpec::Deterministic(Arc::new(f)),
        }
    }

    pub fn deterministic(label: impl Into<String>, f: impl Fn(f64, &mut [f64]) + Send + Sync + 'static) -> Self {
        Self {
            label: label.into(),
            gamma: GammaSpec::Deterministic(Arc::new(f)),
        }
    }

    pub fn state_feedback(label: impl Into<String>, field: Arc<dyn GammaField>) -> Self {
        Self {
            label: label.into(),
            gamma: GammaSpec::StateFeedback(field),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn gamma(&self) -> &GammaSpec {
        &self.gamma
    }

    pub fn is_minimal(&self) -> bool {
        matches!(self.gamma, GammaSpec::Zero)
    }

    /// Evaluates `γ` at grid node `step` of a path state.
    pub fn eval(&self, step: usize, t: f64, s: &[f64], w2: &[f64], out: &mut [f64]) {
        match &self.gamma {
            GammaSpec::Zero => out.fill(0.0),
            GammaSpec::Constant(g) => out.copy_from_slice(g),
            GammaSpec::Deterministic(f) => f(t, out),
            GammaSpec::StateFeedback(field) => field.eval(step, t, s, w2, out),
        }
    }

    fn validate(&self, n2: usize, op: &'static str) -> Result<()> {
        if let GammaSpec::Constant(g) = &self.gamma {
            if g.len() != n2 {
                return Err(PricerError::config(MODULE, op, "gamma dimension must equal n2"));
            }
        }
        Ok(())
    }
}

/// `γ` evaluated at the left end of every step of every path, `[M][N][n2]`.
pub fn gamma_along(spec: &MeasureSpec, bundle: &PathBundle) -> Result<Vec<f64>> {
    let op = "gamma_along";
    spec.validate(bundle.n2(), op)?;
    let (n, n2) = (bundle.grid().steps(), bundle.n2());
    let grid = bundle.grid();
    let mut out = vec![0.0; bundle.paths() * n * n2];
    out.par_chunks_mut(n * n2).enumerate().for_each(|(m, g)| {
        for i in 0..n {
            spec.eval(
                i,
                grid.time(i),
                bundle.s(m, i),
                bundle.w2(m, i),
                &mut g[i * n2..(i + 1) * n2],
            );
        }
    });
    if out.iter().any(|v| !v.is_finite()) {
        return Err(PricerError::domain(
            MODULE,
            op,
            format!("gamma of {} is not finite on the bundle", spec.label()),
        ));
    }
    Ok(out)
}

/// Density process values `q_i` on every path, `[M][N+1]`.
#[derive(Debug, Clone)]
pub struct DensityProcess {
    pub q: Vec<f64>,
    /// Paths whose log-density left the representable range. Their `q` is
    /// set to zero so that they drop out of weighted averages.
    pub flagged: Vec<usize>,
    steps: usize,
}

impl DensityProcess {
    pub fn at(&self, m: usize, i: usize) -> f64 {
        self.q[m * (self.steps + 1) + i]
    }

    pub fn terminal(&self) -> Vec<f64> {
        self.q.chunks(self.steps + 1).map(|c| c[self.steps]).collect()
    }
}

/// Discrete stochastic exponential with exact log-normal steps:
/// `q_{i+1} = q_i·exp(−λ_i·ΔW¹_i + γ_i·ΔW²_i − ½(|λ_i|² + |γ_i|²)Δt)`, `q_0 = 1`.
pub fn density_process(spec: &MeasureSpec, bundle: &PathBundle, params: &MarketParams) -> Result<DensityProcess> {
    let gamma = gamma_along(spec, bundle)?;
    let (n, n1, n2) = (bundle.grid().steps(), bundle.n1(), bundle.n2());
    let grid = bundle.grid();
    let dt = grid.dt();
    let mut q = vec![0.0; bundle.paths() * (n + 1)];
    let overflow: Vec<bool> = q
        .par_chunks_mut(n + 1)
        .enumerate()
        .map(|(m, qm)| {
            let mut log_q = 0.0_f64;
            qm[0] = 1.0;
            for i in 0..n {
                let lam = params.lambda_at(grid.time(i));
                let g = &gamma[(m * n + i) * n2..(m * n + i + 1) * n2];
                let dw1 = bundle.dw1(m, i);
                let dw2 = bundle.dw2(m, i);
                let mut incr = 0.0;
                let mut quad = 0.0;
                for j in 0..n1 {
                    incr -= lam[j] * dw1[j];
                    quad += lam[j] * lam[j];
                }
                for j in 0..n2 {
                    incr += g[j] * dw2[j];
                    quad += g[j] * g[j];
                }
                log_q += incr - 0.5 * quad * dt;
                qm[i + 1] = log_q.exp();
            }
            let bad = qm.iter().any(|v| !v.is_finite() || *v == 0.0) || log_q.abs() > LOG_DENSITY_LIMIT;
            if bad {
                qm.fill(0.0);
            }
            bad
        })
        .collect();
    let flagged: Vec<usize> = overflow
        .iter()
        .enumerate()
        .filter_map(|(m, &b)| b.then_some(m))
        .collect();
    if flagged.len() as f64 > MAX_FLAGGED_FRACTION * bundle.paths() as f64 {
        return Err(PricerError::DensityOverflow {
            flagged: flagged.len(),
            total: bundle.paths(),
        });
    }
    Ok(DensityProcess { q, flagged, steps: n })
}

/// Re-expresses the bundle under `Q`: increments become
/// `ΔW¹ − λΔt` and `ΔW² + γΔt`, with `γ` evaluated along the shifted path, so
/// that plain averages over the returned bundle estimate `E_Q[·]`.
pub fn girsanov_shift(spec: &MeasureSpec, bundle: &PathBundle, params: &MarketParams) -> Result<PathBundle> {
    let op = "girsanov_shift";
    spec.validate(bundle.n2(), op)?;
    let (n, n1, n2) = (bundle.grid().steps(), bundle.n1(), bundle.n2());
    let grid = bundle.grid();
    let dt = grid.dt();
    let mut out = bundle.clone();
    out.dw1
        .par_chunks_mut(n * n1)
        .zip(out.dw2.par_chunks_mut(n * n2))
        .zip(out.s.par_chunks_mut((n + 1) * n1))
        .zip(out.w2.par_chunks_mut((n + 1) * n2))
        .for_each(|(((dw1, dw2), s), w2)| {
            let mut g = vec![0.0; n2];
            for i in 0..n {
                let t = grid.time(i);
                let lam = params.lambda_at(t);
                spec.eval(i, t, &s[i * n1..(i + 1) * n1], &w2[i * n2..(i + 1) * n2], &mut g);
                for j in 0..n1 {
                    dw1[i * n1 + j] -= lam[j] * dt;
                    s[(i + 1) * n1 + j] = s[i * n1 + j] + lam[j] * dt + dw1[i * n1 + j];
                }
                for j in 0..n2 {
                    dw2[i * n2 + j] += g[j] * dt;
                    w2[(i + 1) * n2 + j] = w2[i * n2 + j] + dw2[i * n2 + j];
                }
            }
        });
    if out.dw2.iter().any(|v| !v.is_finite()) {
        return Err(PricerError::domain(
            MODULE,
            op,
            format!("gamma of {} is not finite on the bundle", spec.label()),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{mean, Estimate};

    fn market(lambda: f64) -> MarketParams {
        MarketParams::scalar(100.0, lambda).unwrap()
    }

    #[test]
    fn grid_hits_horizon_exactly() {
        let g = TimeGrid::new(0.7, 3).unwrap();
        assert_eq!(g.time(3), 0.7);
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!(TimeGrid::new(-1.0, 4).is_err());
    }

    #[test]
    fn driftless_and_drifted_terminal_means() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        for (lambda, expected) in [(0.0, 0.0), (0.2, 0.2)] {
            let p = market(lambda);
            let b = simulate(&p, grid, 100_000, 7).unwrap();
            let moves: Vec<f64> = (0..b.paths()).map(|m| b.terminal_s(m)[0] - 100.0).collect();
            assert!((mean(&moves) - expected).abs() < 3e-2, "lambda={lambda}");
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let p = market(0.1);
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let a = simulate(&p, grid, 500, 11).unwrap();
        let b = simulate(&p, grid, 500, 11).unwrap();
        assert_eq!(a, b);
        let c = simulate(&p, grid, 500, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn price_reconstruction_is_exact() {
        let p = MarketParams::new(
            vec![1.0, 2.0],
            Drift::Piecewise {
                breaks: vec![0.0, 0.5],
                values: vec![vec![0.1, -0.2], vec![0.3, 0.0]],
            },
            2,
        )
        .unwrap();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let b = simulate(&p, grid, 20, 3).unwrap();
        for m in 0..b.paths() {
            for i in 0..4 {
                let lam = p.lambda_at(grid.time(i));
                for (j, l) in lam.iter().enumerate() {
                    assert_eq!(b.s(m, i + 1)[j], b.s(m, i)[j] + l * grid.dt() + b.dw1(m, i)[j]);
                }
            }
        }
        assert_eq!(p.lambda_bound(), 0.3);
    }

    #[test]
    fn increments_have_small_empirical_mean() {
        let grid = TimeGrid::new(1.0, 5).unwrap();
        let b = simulate(&market(0.0), grid, 20_000, 5).unwrap();
        let bound = 5.0 / (b.paths() as f64).sqrt() * grid.dt().sqrt();
        for i in 0..5 {
            let x: Vec<f64> = (0..b.paths()).map(|m| b.dw1(m, i)[0]).collect();
            let y: Vec<f64> = (0..b.paths()).map(|m| b.dw2(m, i)[0]).collect();
            assert!(mean(&x).abs() < bound);
            assert!(mean(&y).abs() < bound);
        }
    }

    #[test]
    fn capacity_limit_is_reported() {
        let grid = TimeGrid::new(1.0, 1000).unwrap();
        let err = simulate(&market(0.0), grid, 1 << 20, 1).unwrap_err();
        assert!(matches!(err, PricerError::Capacity { .. }));
    }

    #[test]
    fn zero_gamma_zero_lambda_density_is_one() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let p = market(0.0);
        let b = simulate(&p, grid, 100, 1).unwrap();
        let q = density_process(&MeasureSpec::minimal(), &b, &p).unwrap();
        assert!(q.q.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn density_is_positive_martingale() {
        let grid = TimeGrid::new(1.0, 20).unwrap();
        let p = market(0.3);
        let b = simulate(&p, grid, 100_000, 2).unwrap();
        for spec in [
            MeasureSpec::minimal(),
            MeasureSpec::constant(vec![0.8]),
            MeasureSpec::ramp(vec![-1.0]),
        ] {
            let q = density_process(&spec, &b, &p).unwrap();
            assert!(q.q.iter().all(|&v| v > 0.0));
            for i in [5, 20] {
                let qi: Vec<f64> = (0..b.paths()).map(|m| q.at(m, i)).collect();
                assert!((mean(&qi) - 1.0).abs() < 3e-2, "{}", spec.label());
            }
        }
    }

    #[test]
    fn relative_entropy_of_constant_shift() {
        // E[q_T ln q_T] = γ²T/2 for q = exp(γW_T − γ²T/2).
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let p = market(0.0);
        let b = simulate(&p, grid, 100_000, 9).unwrap();
        let q = density_process(&MeasureSpec::constant(vec![0.8]), &b, &p).unwrap();
        let v: Vec<f64> = q.terminal().iter().map(|x| x * x.ln()).collect();
        assert!((mean(&v) - 0.32).abs() < 2e-2);
    }

    #[test]
    fn overflowing_density_is_rejected() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let p = market(0.0);
        let b = simulate(&p, grid, 100, 1).unwrap();
        let err = density_process(&MeasureSpec::constant(vec![1e4]), &b, &p).unwrap_err();
        assert!(matches!(err, PricerError::DensityOverflow { .. }));
    }

    #[test]
    fn shift_by_zero_is_identity_without_drift() {
        let grid = TimeGrid::new(1.0, 6).unwrap();
        let p = market(0.0);
        let b = simulate(&p, grid, 50, 4).unwrap();
        assert_eq!(girsanov_shift(&MeasureSpec::minimal(), &b, &p).unwrap(), b);
    }

    #[test]
    fn shifted_w2_has_gamma_drift() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let p = market(0.2);
        let b = simulate(&p, grid, 100_000, 4).unwrap();
        let spec = MeasureSpec::constant(vec![1.0]);
        let shifted = girsanov_shift(&spec, &b, &p).unwrap();
        let w: Vec<f64> = (0..b.paths()).map(|m| shifted.terminal_w2(m)[0]).collect();
        assert!((mean(&w) - 1.0).abs() < 3e-2);
        // S is a Q-martingale
        let s: Vec<f64> = (0..b.paths()).map(|m| shifted.terminal_s(m)[0] - 100.0).collect();
        assert!(mean(&s).abs() < 3e-2);
    }

    #[test]
    fn weighting_and_shifting_agree() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let p = market(0.2);
        let b = simulate(&p, grid, 50_000, 21).unwrap();
        let spec = MeasureSpec::constant(vec![1.0]);
        let q = density_process(&spec, &b, &p).unwrap();
        let weighted: Vec<f64> = (0..b.paths()).map(|m| q.at(m, 10) * b.terminal_w2(m)[0]).collect();
        let shifted_b = girsanov_shift(&spec, &b, &p).unwrap();
        let shifted: Vec<f64> = (0..b.paths()).map(|m| shifted_b.terminal_w2(m)[0]).collect();
        let (ew, es) = (Estimate::from_samples(&weighted), Estimate::from_samples(&shifted));
        assert!((ew.mean - es.mean).abs() <= 2.0 * ew.combined_stderr(&es));
    }

    #[test]
    fn binary_round_trip() {
        let grid = TimeGrid::new(0.5, 3).unwrap();
        let p = MarketParams::new(vec![1.0], Drift::Constant(vec![0.2]), 2).unwrap();
        let b = simulate(&p, grid, 7, 99).unwrap();
        let mut buf = Vec::new();
        b.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 48 + 7 * 3 * 3 * 8);
        assert_eq!(u64::from_le_bytes(buf[0..8].try_into().unwrap()), 99);
        assert_eq!(f64::from_le_bytes(buf[40..48].try_into().unwrap()), 0.5);
        let back = PathBundle::read_binary(buf.as_slice(), &p).unwrap();
        assert_eq!(back, b);
        assert!(PathBundle::read_binary(buf.as_slice(), &market(0.0)).is_err());
    }
}
