//! Run configuration.
//!
//! TOML with one table per section; dotted keys (`market.T = 1.0`) and
//! `[market]` tables are interchangeable. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use entropic_pricer_core::quadrature::QuadConfig;
use entropic_pricer_core::{
    Claim, ConvexIntegrand, Drift, JointPayoff, MarketParams, McConfig, PdeConfig, SolverChoice, SolverMethod,
    TableGrid, TimeGrid, W2Payoff,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    fn to_vec(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(x) => vec![*x],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSection {
    #[serde(rename = "S0", default = "zero")]
    pub s0: OneOrMany,
    #[serde(default = "zero")]
    pub lambda: OneOrMany,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "N")]
    pub steps: usize,
    #[serde(default = "one")]
    pub n2: usize,
}

fn zero() -> OneOrMany {
    OneOrMany::One(0.0)
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrandKind {
    Quadratic,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrandSection {
    pub family: IntegrandKind,
    /// Weight of the quadratic family.
    #[serde(default)]
    pub k: Option<f64>,
    #[serde(rename = "K")]
    pub growth: f64,
    /// Two-column `z,rho` CSV, relative to the config file.
    #[serde(default)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimKindName {
    Constant,
    Attainable,
    TerminalW2,
    TerminalJoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayoffName {
    Identity,
    Cos,
    CappedSquare,
    Digital,
    Linear,
    CallSpot,
    CosSum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimSection {
    pub kind: ClaimKindName,
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default)]
    pub v0: Option<f64>,
    #[serde(default)]
    pub hedge: Option<OneOrMany>,
    #[serde(default)]
    pub payoff: Option<PayoffName>,
    #[serde(default)]
    pub cap: Option<f64>,
    #[serde(default)]
    pub level: Option<f64>,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub b: Option<f64>,
    #[serde(default)]
    pub strike: Option<f64>,
    #[serde(default)]
    pub clamp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_method")]
    pub method: SolverMethod,
    #[serde(rename = "M", default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    #[serde(rename = "R_trunc", default)]
    pub r_trunc: Option<f64>,
    #[serde(default = "default_max_condition")]
    pub max_condition: f64,
    #[serde(default)]
    pub pde: PdeConfig,
    #[serde(default)]
    pub quadrature: QuadConfig,
    /// Run the axiom probes alongside `price`.
    #[serde(default)]
    pub probes: bool,
}

fn default_method() -> SolverMethod {
    SolverMethod::RegressionMc
}
fn default_paths() -> usize {
    100_000
}
fn default_seed() -> u64 {
    42
}
fn default_degree() -> usize {
    McConfig::default().degree
}
fn default_ridge() -> f64 {
    McConfig::default().ridge
}
fn default_max_condition() -> f64 {
    McConfig::default().max_condition
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            method: default_method(),
            paths: default_paths(),
            seed: default_seed(),
            degree: default_degree(),
            ridge: default_ridge(),
            r_trunc: None,
            max_condition: default_max_condition(),
            pde: PdeConfig::default(),
            quadrature: QuadConfig::default(),
            probes: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualSection {
    /// Paths of the dual bundle when the solver has none of its own.
    #[serde(rename = "M", default = "default_dual_paths")]
    pub paths: usize,
    /// Add the optimizer and pricing measures derived from the solution.
    #[serde(default = "yes")]
    pub solution_measures: bool,
    /// Repeat the optimizer gap on a bundle drawn from `seed + 1`.
    #[serde(default = "yes")]
    pub independent_bundle: bool,
}

fn default_dual_paths() -> usize {
    20_000
}
fn yes() -> bool {
    true
}

impl Default for DualSection {
    fn default() -> Self {
        Self {
            paths: default_dual_paths(),
            solution_measures: true,
            independent_bundle: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaKind {
    Quadratic,
    FromRho,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingSection {
    #[serde(default = "default_delta")]
    pub delta: DeltaKind,
    /// Outer weight of δ; defaults to the integrand weight.
    #[serde(default)]
    pub k: Option<f64>,
    /// `"optimal"`, `"follow_z1"` or a number for a constant hedge.
    #[serde(default = "default_hedges")]
    pub hedges: Vec<HedgeName>,
    #[serde(rename = "M", default = "default_track_paths")]
    pub paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HedgeName {
    Constant(f64),
    Named(String),
}

fn default_delta() -> DeltaKind {
    DeltaKind::Quadratic
}
fn default_hedges() -> Vec<HedgeName> {
    vec![HedgeName::Named("optimal".into())]
}
fn default_track_paths() -> usize {
    10_000
}

impl Default for TrackingSection {
    fn default() -> Self {
        Self {
            delta: default_delta(),
            k: None,
            hedges: default_hedges(),
            paths: default_track_paths(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSection {
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_per_axis")]
    pub per_axis: usize,
}

fn default_radius() -> f64 {
    8.0
}
fn default_per_axis() -> usize {
    65
}

impl Default for CheckSection {
    fn default() -> Self {
        Self {
            radius: default_radius(),
            per_axis: default_per_axis(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub market: MarketSection,
    pub integrand: IntegrandSection,
    #[serde(default)]
    pub claim: Option<ClaimSection>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub dual: DualSection,
    #[serde(default)]
    pub tracking: TrackingSection,
    #[serde(default)]
    pub check: CheckSection,
    #[serde(default)]
    pub output: OutputSection,
    /// Directory of the config file, for relative paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate_files()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| bad(format!("invalid config: {e}")))
    }

    fn validate_files(&self) -> Result<(), CliError> {
        if let Some(t) = &self.integrand.table {
            let p = self.base_dir.join(t);
            if !p.is_file() {
                return Err(bad(format!("integrand table {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> Result<MarketParams, CliError> {
        let m = &self.market;
        Ok(MarketParams::new(
            m.s0.to_vec(),
            Drift::Constant(m.lambda.to_vec()),
            m.n2,
        )?)
    }

    pub fn grid(&self) -> Result<TimeGrid, CliError> {
        Ok(TimeGrid::new(self.market.horizon, self.market.steps)?)
    }

    pub fn integrand(&self) -> Result<ConvexIntegrand, CliError> {
        let s = &self.integrand;
        match s.family {
            IntegrandKind::Quadratic => {
                let k =
                    s.k.ok_or_else(|| bad("integrand.k is required for the quadratic family"))?;
                Ok(ConvexIntegrand::quadratic(k, s.growth, self.market.n2)?)
            }
            IntegrandKind::Table => {
                let rel = s
                    .table
                    .as_ref()
                    .ok_or_else(|| bad("integrand.table is required for the table family"))?;
                let path = self.base_dir.join(rel);
                let file =
                    std::fs::File::open(&path).map_err(|e| bad(format!("cannot open {}: {e}", path.display())))?;
                let table = TableGrid::from_csv(std::io::BufReader::new(file))?;
                Ok(ConvexIntegrand::table(table, s.growth)?)
            }
        }
    }

    pub fn claim(&self) -> Result<Claim, CliError> {
        let c = self
            .claim
            .as_ref()
            .ok_or_else(|| bad("this command needs a [claim] section"))?;
        let need = |v: Option<f64>, key: &str| v.ok_or_else(|| bad(format!("claim.{key} is required")));
        let params = self.params()?;
        let claim = match c.kind {
            ClaimKindName::Constant => Claim::constant(need(c.value, "value")?)?,
            ClaimKindName::Attainable => {
                let hedge = c.hedge.as_ref().ok_or_else(|| bad("claim.hedge is required"))?.to_vec();
                Claim::attainable(need(c.v0, "v0")?, hedge, &params, self.market.horizon)?
            }
            ClaimKindName::TerminalW2 => {
                let payoff = match c.payoff.ok_or_else(|| bad("claim.payoff is required"))? {
                    PayoffName::Identity => W2Payoff::Identity,
                    PayoffName::Cos => W2Payoff::Cos,
                    PayoffName::CappedSquare => W2Payoff::CappedSquare {
                        cap: need(c.cap, "cap")?,
                    },
                    PayoffName::Digital => W2Payoff::Digital {
                        level: need(c.level, "level")?,
                    },
                    other => return Err(bad(format!("payoff {other:?} is not a payoff of W2 alone"))),
                };
                match c.clamp {
                    Some(clamp) => Claim::terminal_w2_clamped(payoff, clamp)?,
                    None => Claim::terminal_w2(payoff, self.market.horizon)?,
                }
            }
            ClaimKindName::TerminalJoint => {
                let payoff = match c.payoff.ok_or_else(|| bad("claim.payoff is required"))? {
                    PayoffName::Linear => JointPayoff::Linear {
                        a: need(c.a, "a")?,
                        b: need(c.b, "b")?,
                    },
                    PayoffName::CallSpot => JointPayoff::CallSpot {
                        strike: need(c.strike, "strike")?,
                    },
                    PayoffName::CosSum => JointPayoff::CosSum,
                    other => return Err(bad(format!("payoff {other:?} is not a joint payoff"))),
                };
                Claim::terminal_joint(payoff, need(c.clamp, "clamp")?)?
            }
        };
        claim.validate_for(&params)?;
        Ok(claim)
    }

    pub fn solver_choice(&self) -> SolverChoice {
        let s = &self.solver;
        match s.method {
            SolverMethod::RegressionMc => SolverChoice::RegressionMc {
                paths: s.paths,
                seed: s.seed,
                cfg: McConfig {
                    degree: s.degree,
                    ridge: s.ridge,
                    r_trunc: s.r_trunc,
                    max_condition: s.max_condition,
                },
            },
            SolverMethod::PdeFd => SolverChoice::PdeFd(s.pde),
            SolverMethod::ColeHopf => SolverChoice::ColeHopf(s.quadrature),
        }
    }
}
