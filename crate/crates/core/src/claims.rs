//! Bounded terminal payoffs.
//!
//! Every claim is a function of the terminal state `(S_T, W²_T)`, which keeps
//! all of them Markovian and usable by both BSDE solvers. Unbounded built-in
//! payoffs are clamped to `[−C, C]`.

use serde::{Deserialize, Serialize};

use crate::error::{PricerError, Result};
use crate::market_paths::{MarketParams, PathBundle};

const MODULE: &str = "claims";

/// Number of terminal standard deviations used for default clamps and bounds.
pub const DEFAULT_CLAMP_SIGMAS: f64 = 12.0;

/// Built-in payoffs of the orthogonal factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum W2Payoff {
    Identity,
    Cos,
    /// `min(w², cap)`.
    CappedSquare {
        cap: f64,
    },
    /// `1{w > level}`.
    Digital {
        level: f64,
    },
}

impl W2Payoff {
    pub fn eval(&self, w: f64) -> f64 {
        match *self {
            W2Payoff::Identity => w,
            W2Payoff::Cos => w.cos(),
            W2Payoff::CappedSquare { cap } => (w * w).min(cap),
            W2Payoff::Digital { level } => {
                if w > level {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn sup_abs(&self) -> Option<f64> {
        match *self {
            W2Payoff::Identity => None,
            W2Payoff::Cos | W2Payoff::Digital { .. } => Some(1.0),
            W2Payoff::CappedSquare { cap } => Some(cap.abs()),
        }
    }

    /// Lipschitz constant, `None` for discontinuous payoffs.
    fn lipschitz(&self) -> Option<f64> {
        match *self {
            W2Payoff::Identity | W2Payoff::Cos => Some(1.0),
            W2Payoff::CappedSquare { cap } => Some(2.0 * cap.max(0.0).sqrt()),
            W2Payoff::Digital { .. } => None,
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match *self {
            W2Payoff::CappedSquare { cap } if cap > 0.0 => vec![-cap.sqrt(), cap.sqrt()],
            W2Payoff::Digital { level } => vec![level],
            _ => Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            W2Payoff::CappedSquare { cap } => cap.is_finite() && cap >= 0.0,
            W2Payoff::Digital { level } => level.is_finite(),
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(PricerError::config(
                MODULE,
                "payoff",
                format!("invalid payoff parameters {self:?}"),
            ))
        }
    }
}

/// Built-in payoffs of `(S_T, W²_T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum JointPayoff {
    /// `a·s + b·w`.
    Linear { a: f64, b: f64 },
    /// `max(s − strike, 0)`.
    CallSpot { strike: f64 },
    /// `cos(s) + cos(w)`.
    CosSum,
}

impl JointPayoff {
    pub fn eval(&self, s: f64, w: f64) -> f64 {
        match *self {
            JointPayoff::Linear { a, b } => a * s + b * w,
            JointPayoff::CallSpot { strike } => (s - strike).max(0.0),
            JointPayoff::CosSum => s.cos() + w.cos(),
        }
    }

    fn w2_lipschitz(&self) -> f64 {
        match *self {
            JointPayoff::Linear { b, .. } => b.abs(),
            JointPayoff::CallSpot { .. } => 0.0,
            JointPayoff::CosSum => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimKind {
    Constant(f64),
    /// `v₀ + H·(S_T − S₀)`, the terminal value of a constant hedge.
    Attainable {
        v0: f64,
        hedge: Vec<f64>,
    },
    TerminalW2 {
        payoff: W2Payoff,
        clamp: f64,
    },
    TerminalJoint {
        payoff: JointPayoff,
        clamp: f64,
    },
    /// `offset + Σ wᵢ·ξᵢ`.
    Combination {
        terms: Vec<(f64, Claim)>,
        offset: f64,
    },
}

/// A bounded payoff together with its declared bound on `|ξ|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    kind: ClaimKind,
    bound: f64,
}

fn clamp_to(v: f64, c: f64) -> f64 {
    v.clamp(-c, c)
}

impl Claim {
    pub fn constant(c: f64) -> Result<Self> {
        if !c.is_finite() {
            return Err(PricerError::config(MODULE, "constant", "constant must be finite"));
        }
        Ok(Self {
            kind: ClaimKind::Constant(c),
            bound: c.abs(),
        })
    }

    /// Terminal value of holding `hedge` units from capital `v0`. The declared
    /// bound covers `DEFAULT_CLAMP_SIGMAS` standard deviations of `W¹_T`.
    pub fn attainable(v0: f64, hedge: Vec<f64>, params: &MarketParams, horizon: f64) -> Result<Self> {
        if hedge.len() != params.n1() {
            return Err(PricerError::config(
                MODULE,
                "attainable",
                "hedge dimension must equal n1",
            ));
        }
        if !v0.is_finite() || hedge.iter().any(|h| !h.is_finite()) {
            return Err(PricerError::config(MODULE, "attainable", "non-finite parameters"));
        }
        let h_norm = hedge.iter().map(|h| h * h).sum::<f64>().sqrt();
        let reach = params.lambda_bound() * horizon + DEFAULT_CLAMP_SIGMAS * (horizon * params.n1() as f64).sqrt();
        Ok(Self {
            kind: ClaimKind::Attainable { v0, hedge },
            bound: v0.abs() + h_norm * reach,
        })
    }

    /// `g(W²_T)` with the default clamp: `sup|g|` for bounded payoffs and
    /// `DEFAULT_CLAMP_SIGMAS·√T` otherwise.
    pub fn terminal_w2(payoff: W2Payoff, horizon: f64) -> Result<Self> {
        let clamp = payoff.sup_abs().unwrap_or(DEFAULT_CLAMP_SIGMAS * horizon.sqrt());
        Self::terminal_w2_clamped(payoff, clamp)
    }

    pub fn terminal_w2_clamped(payoff: W2Payoff, clamp: f64) -> Result<Self> {
        payoff.validate()?;
        if !(clamp.is_finite() && clamp >= 0.0) {
            return Err(PricerError::config(
                MODULE,
                "terminal_w2",
                "clamp must be finite and nonnegative",
            ));
        }
        let bound = payoff.sup_abs().map_or(clamp, |s| s.min(clamp));
        Ok(Self {
            kind: ClaimKind::TerminalW2 { payoff, clamp },
            bound,
        })
    }

    pub fn terminal_joint(payoff: JointPayoff, clamp: f64) -> Result<Self> {
        if !(clamp.is_finite() && clamp >= 0.0) {
            return Err(PricerError::config(
                MODULE,
                "terminal_joint",
                "clamp must be finite and nonnegative",
            ));
        }
        let bound = match payoff {
            JointPayoff::CosSum => clamp.min(2.0),
            _ => clamp,
        };
        Ok(Self {
            kind: ClaimKind::TerminalJoint { payoff, clamp },
            bound,
        })
    }

    pub fn combination(terms: Vec<(f64, Claim)>, offset: f64) -> Result<Self> {
        if !offset.is_finite() || terms.iter().any(|(w, _)| !w.is_finite()) {
            return Err(PricerError::config(MODULE, "combination", "weights must be finite"));
        }
        let bound = offset.abs() + terms.iter().map(|(w, c)| w.abs() * c.bound).sum::<f64>();
        Ok(Self {
            kind: ClaimKind::Combination { terms, offset },
            bound,
        })
    }

    /// `ξ + v`.
    pub fn shifted(&self, v: f64) -> Result<Self> {
        Self::combination(vec![(1.0, self.clone())], v)
    }

    /// `α·ξ₁ + (1 − α)·ξ₂`.
    pub fn mixture(alpha: f64, a: &Claim, b: &Claim) -> Result<Self> {
        Self::combination(vec![(alpha, a.clone()), (1.0 - alpha, b.clone())], 0.0)
    }

    pub fn kind(&self) -> &ClaimKind {
        &self.kind
    }

    /// Declared bound on `|ξ|`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Payoff at terminal prices `s_t` and factor `w2_t`. Multi-dimensional
    /// built-ins read the first component.
    pub fn payoff(&self, s_t: &[f64], w2_t: &[f64], s0: &[f64]) -> f64 {
        match &self.kind {
            ClaimKind::Constant(c) => *c,
            ClaimKind::Attainable { v0, hedge } => {
                v0 + hedge
                    .iter()
                    .zip(s_t.iter().zip(s0))
                    .map(|(h, (s, s0))| h * (s - s0))
                    .sum::<f64>()
            }
            ClaimKind::TerminalW2 { payoff, clamp } => clamp_to(payoff.eval(w2_t[0]), *clamp),
            ClaimKind::TerminalJoint { payoff, clamp } => clamp_to(payoff.eval(s_t[0], w2_t[0]), *clamp),
            ClaimKind::Combination { terms, offset } => {
                offset + terms.iter().map(|(w, c)| w * c.payoff(s_t, w2_t, s0)).sum::<f64>()
            }
        }
    }

    /// Checks that the claim can be evaluated on paths of this market.
    pub fn validate_for(&self, params: &MarketParams) -> Result<()> {
        match &self.kind {
            ClaimKind::Attainable { hedge, .. } if hedge.len() != params.n1() => Err(PricerError::config(
                MODULE,
                "evaluate",
                format!("hedge has dimension {}, market has n1 = {}", hedge.len(), params.n1()),
            )),
            ClaimKind::Combination { terms, .. } => terms.iter().try_for_each(|(_, c)| c.validate_for(params)),
            _ => Ok(()),
        }
    }

    /// Payoff on path `m` of a bundle.
    pub fn evaluate(&self, bundle: &PathBundle, m: usize, params: &MarketParams) -> Result<f64> {
        if bundle.n1() != params.n1() || bundle.n2() != params.n2() {
            return Err(PricerError::config(
                MODULE,
                "evaluate",
                "bundle and market dimensions differ",
            ));
        }
        self.validate_for(params)?;
        Ok(self.payoff(bundle.terminal_s(m), bundle.terminal_w2(m), params.s0()))
    }

    /// Lipschitz constant of the payoff in `W²_T`. Discontinuous payoffs use
    /// the surrogate `jump / h_payoff`.
    pub fn w2_lipschitz(&self, h_payoff: f64) -> f64 {
        match &self.kind {
            ClaimKind::Constant(_) | ClaimKind::Attainable { .. } => 0.0,
            ClaimKind::TerminalW2 { payoff, clamp } => payoff.lipschitz().unwrap_or_else(|| clamp.min(1.0) / h_payoff),
            ClaimKind::TerminalJoint { payoff, .. } => payoff.w2_lipschitz(),
            ClaimKind::Combination { terms, .. } => terms.iter().map(|(w, c)| w.abs() * c.w2_lipschitz(h_payoff)).sum(),
        }
    }

    /// True when the payoff depends on `W²_T` only (or is constant).
    pub fn depends_on_w2_only(&self) -> bool {
        match &self.kind {
            ClaimKind::Constant(_) | ClaimKind::TerminalW2 { .. } => true,
            ClaimKind::Attainable { hedge, .. } => hedge.iter().all(|h| *h == 0.0),
            ClaimKind::TerminalJoint { .. } => false,
            ClaimKind::Combination { terms, .. } => terms.iter().all(|(w, c)| *w == 0.0 || c.depends_on_w2_only()),
        }
    }

    /// True when the payoff does not depend on `W²_T`.
    pub fn depends_on_s_only(&self) -> bool {
        match &self.kind {
            ClaimKind::Constant(_) | ClaimKind::Attainable { .. } => true,
            ClaimKind::TerminalW2 { .. } => false,
            ClaimKind::TerminalJoint { payoff, .. } => payoff.w2_lipschitz() == 0.0,
            ClaimKind::Combination { terms, .. } => terms.iter().all(|(w, c)| *w == 0.0 || c.depends_on_s_only()),
        }
    }

    /// Payoff as a function of the scalar `W²_T` alone, if it is one.
    pub fn as_w2_function(&self) -> Option<impl Fn(f64) -> f64 + '_> {
        if !self.depends_on_w2_only() {
            return None;
        }
        Some(move |w: f64| self.payoff(&[0.0], &[w], &[0.0]))
    }

    /// Points where the `W²` payoff is not smooth, including clamp crossings.
    pub fn w2_breakpoints(&self) -> Vec<f64> {
        let mut out = match &self.kind {
            ClaimKind::TerminalW2 { payoff, clamp } => {
                let mut b = payoff.breakpoints();
                if matches!(payoff, W2Payoff::Identity) {
                    b.extend([-clamp, *clamp]);
                }
                b
            }
            ClaimKind::Combination { terms, .. } => terms.iter().flat_map(|(_, c)| c.w2_breakpoints()).collect(),
            _ => Vec::new(),
        };
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_paths::{simulate, TimeGrid};

    #[test]
    fn payoff_examples() {
        let p = MarketParams::scalar(10.0, 0.2).unwrap();
        assert_eq!(Claim::constant(3.0).unwrap().payoff(&[1.0], &[2.0], &[10.0]), 3.0);
        // W¹_T = 0.5 with λ = 0.2, T = 1 puts S_T at S₀ + 0.7.
        let att = Claim::attainable(3.0, vec![1.0], &p, 1.0).unwrap();
        assert!((att.payoff(&[10.7], &[0.0], &[10.0]) - 3.7).abs() < 1e-12);
        let id = Claim::terminal_w2_clamped(W2Payoff::Identity, 10.0).unwrap();
        assert_eq!(id.payoff(&[0.0], &[1.3], &[0.0]), 1.3);
    }

    #[test]
    fn clamps_bound_payoffs() {
        let id = Claim::terminal_w2(W2Payoff::Identity, 1.0).unwrap();
        assert_eq!(id.bound(), 12.0);
        assert_eq!(id.payoff(&[0.0], &[50.0], &[0.0]), 12.0);
        assert_eq!(id.payoff(&[0.0], &[-50.0], &[0.0]), -12.0);
        let sq = Claim::terminal_w2(W2Payoff::CappedSquare { cap: 4.0 }, 1.0).unwrap();
        assert_eq!(sq.bound(), 4.0);
        assert_eq!(sq.payoff(&[0.0], &[3.0], &[0.0]), 4.0);
        let dig = Claim::terminal_w2(W2Payoff::Digital { level: 0.0 }, 1.0).unwrap();
        assert_eq!(dig.payoff(&[0.0], &[0.1], &[0.0]), 1.0);
        assert_eq!(dig.payoff(&[0.0], &[0.0], &[0.0]), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let p1 = MarketParams::scalar(1.0, 0.0).unwrap();
        let p2 = MarketParams::new(vec![1.0, 1.0], crate::market_paths::Drift::Constant(vec![0.0, 0.0]), 1).unwrap();
        assert!(Claim::attainable(0.0, vec![1.0, 2.0], &p1, 1.0).is_err());
        let c = Claim::attainable(0.0, vec![1.0], &p1, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let b = simulate(&p2, grid, 4, 0).unwrap();
        assert!(c.evaluate(&b, 0, &p2).unwrap_err().is_config());
    }

    #[test]
    fn attainable_claims_replicate_pathwise() {
        let p = MarketParams::scalar(5.0, 0.2).unwrap();
        let grid = TimeGrid::new(1.0, 25).unwrap();
        let b = simulate(&p, grid, 200, 13).unwrap();
        let c = Claim::attainable(3.0, vec![0.5], &p, 1.0).unwrap();
        for m in 0..b.paths() {
            let gains: f64 = (0..25).map(|i| 0.5 * (b.s(m, i + 1)[0] - b.s(m, i)[0])).sum();
            let xi = c.evaluate(&b, m, &p).unwrap();
            assert!((3.0 + gains - xi).abs() < 1e-12);
        }
    }

    #[test]
    fn combination_algebra() {
        let a = Claim::terminal_w2(W2Payoff::Cos, 1.0).unwrap();
        let b = Claim::constant(2.0).unwrap();
        let mix = Claim::mixture(0.25, &a, &b).unwrap();
        let v = mix.payoff(&[0.0], &[0.0], &[0.0]);
        assert!((v - (0.25 + 1.5)).abs() < 1e-15);
        assert_eq!(mix.bound(), 0.25 + 1.5);
        assert!(mix.depends_on_w2_only());
        let sh = a.shifted(1.0).unwrap();
        assert_eq!(sh.payoff(&[0.0], &[0.0], &[0.0]), 2.0);
    }

    #[test]
    fn lipschitz_surrogates() {
        let sq = Claim::terminal_w2(W2Payoff::CappedSquare { cap: 4.0 }, 1.0).unwrap();
        assert_eq!(sq.w2_lipschitz(0.1), 4.0);
        let dig = Claim::terminal_w2(W2Payoff::Digital { level: 0.0 }, 1.0).unwrap();
        assert_eq!(dig.w2_lipschitz(0.1), 10.0);
        assert_eq!(Claim::constant(1.0).unwrap().w2_lipschitz(0.1), 0.0);
    }

    #[test]
    fn w2_function_view() {
        let sq = Claim::terminal_w2(W2Payoff::CappedSquare { cap: 4.0 }, 1.0).unwrap();
        let f = sq.as_w2_function().unwrap();
        assert_eq!(f(1.5), 2.25);
        assert_eq!(sq.w2_breakpoints(), vec![-2.0, 2.0]);
        let joint = Claim::terminal_joint(JointPayoff::CosSum, 2.0).unwrap();
        assert!(joint.as_w2_function().is_none());
    }

    proptest::proptest! {
        #[test]
        fn clamped_kinds_respect_bound(w in -1e3f64..1e3, s in -1e3f64..1e3) {
            let claims = [
                Claim::terminal_w2(W2Payoff::Identity, 1.0).unwrap(),
                Claim::terminal_w2(W2Payoff::CappedSquare { cap: 4.0 }, 1.0).unwrap(),
                Claim::terminal_w2(W2Payoff::Digital { level: 0.3 }, 1.0).unwrap(),
                Claim::terminal_joint(JointPayoff::Linear { a: 1.0, b: 1.0 }, 7.0).unwrap(),
                Claim::terminal_joint(JointPayoff::CallSpot { strike: 0.0 }, 5.0).unwrap(),
            ];
            for c in &claims {
                proptest::prop_assert!(c.payoff(&[s], &[w], &[0.0]).abs() <= c.bound());
            }
        }
    }
}
