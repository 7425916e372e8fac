use std::path::PathBuf;
use std::sync::Arc;

use entropic_pricer_core::convex_integrand::sample_grid;
use entropic_pricer_core::duality::{
    duality_gap, optimizer_measure, pricing_measure_check, scan_csv, scan_family, PricingMeasureCheck,
};
use entropic_pricer_core::market_paths::simulate;
use entropic_pricer_core::pricing::batch_csv;
use entropic_pricer_core::tracking::{delta_from_rho, tracking_simulation, HedgeSpec};
use entropic_pricer_core::{
    ConditionReport, DualReport, Estimate, InstRiskMeasure, PathBundle, PriceReport, Pricer, SolverMethod, TrackReport,
};
use serde::Serialize;

use crate::config::{DeltaKind, HedgeName, IntegrandKind, RunConfig};
use crate::output::OutDir;
use crate::selfcheck::{run_selfcheck, SelfcheckReport};
use crate::CliError;

/// Optimal hedges must have vanishing risk to this level in closed form.
const RISK_TOL_CLOSED_FORM: f64 = 1e-6;
/// Same, when the minimizer is found numerically.
const RISK_TOL_NUMERIC: f64 = 1e-3;
const RISK_FLOOR: f64 = -1e-9;

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    /// Every contract checked by the command held.
    pub passed: bool,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            2
        }
    }
}

fn out_dir(cfg: Option<&RunConfig>, opts: &RunOptions) -> OutDir {
    let dir = opts
        .out_dir
        .clone()
        .or_else(|| cfg.and_then(|c| c.output.dir.as_ref().map(|d| c.base_dir.join(d))))
        .unwrap_or_else(|| PathBuf::from("."));
    OutDir::new(dir)
}

fn with_seed(cfg: &RunConfig, opts: &RunOptions) -> RunConfig {
    let mut cfg = cfg.clone();
    if let Some(seed) = opts.seed {
        cfg.solver.seed = seed;
    }
    cfg
}

fn pricer(cfg: &RunConfig) -> Result<Pricer, CliError> {
    Ok(Pricer::new(
        cfg.integrand()?,
        cfg.params()?,
        cfg.grid()?,
        cfg.solver_choice(),
    )?)
}

pub fn cmd_price(cfg: &RunConfig, opts: &RunOptions) -> Result<Outcome, CliError> {
    let cfg = with_seed(cfg, opts);
    let claim = cfg.claim()?;
    let pricer = pricer(&cfg)?;
    let report = if cfg.solver.probes {
        pricer.price_with_probes(&claim)?
    } else {
        pricer.price(&claim)?
    };
    let passed = report.diagnostics.energy.holds && report.probes.iter().all(|p| p.passed);
    let out = out_dir(Some(&cfg), opts);
    let mut files = vec![out.json("price.json", "price", &report)?];
    files.push(out.text("price.csv", &batch_csv(std::slice::from_ref(&report)))?);
    Ok(Outcome {
        passed,
        files,
        summary: price_summary(&report),
    })
}

fn price_summary(r: &PriceReport) -> String {
    let mut s = format!("{} {}: F = {:.10} (stderr {:.3e})", r.claim, r.method, r.f, r.stderr);
    if !r.probes.is_empty() {
        s.push_str(&format!(", probes {}/{}", r.probes_passed(), r.probes.len()));
    }
    if !r.diagnostics.energy.holds {
        s.push_str(", energy bound violated");
    }
    s
}

#[derive(Debug, Serialize)]
struct DualBody {
    claim: String,
    method: SolverMethod,
    #[serde(rename = "F")]
    f: Estimate,
    scan: Vec<DualReport>,
    min_gap_spec: String,
    /// Gap at the optimizer measure recomputed on an independent bundle.
    independent_optimizer_gap: Option<DualReport>,
    pricing_measure: Option<PricingMeasureCheck>,
    gaps_nonnegative: bool,
    estimators_agree: bool,
}

pub fn cmd_dual(cfg: &RunConfig, opts: &RunOptions) -> Result<Outcome, CliError> {
    let cfg = with_seed(cfg, opts);
    let claim = cfg.claim()?;
    let pricer = pricer(&cfg)?;
    let params = pricer.params().clone();
    let integrand = pricer.integrand().clone();
    let sol = pricer.solve(&claim)?;
    let f = Estimate {
        mean: sol.y0,
        stderr: sol.stderr,
    };
    let seed = cfg.solver.seed;
    let bundle: Arc<PathBundle> = match pricer.bundle() {
        Some(b) => b.clone(),
        None => Arc::new(simulate(&params, pricer.grid(), cfg.dual.paths, seed)?),
    };

    let mut specs = scan_family(params.n2());
    let with_fields = cfg.dual.solution_measures && sol.has_fields();
    if with_fields {
        specs.push(optimizer_measure(&sol, &integrand)?);
    }
    let scan = specs
        .iter()
        .map(|spec| duality_gap(&claim, spec, &integrand, f, &bundle, &params))
        .collect::<Result<Vec<_>, _>>()?;
    let min_gap_spec = scan
        .iter()
        .min_by(|a, b| a.gap.total_cmp(&b.gap))
        .map(|r| r.spec.clone())
        .unwrap_or_default();

    let (independent_optimizer_gap, pricing_measure) = if with_fields {
        let indep = if cfg.dual.independent_bundle {
            let other = simulate(&params, pricer.grid(), bundle.paths(), seed.wrapping_add(1))?;
            let spec = optimizer_measure(&sol, &integrand)?;
            Some(duality_gap(&claim, &spec, &integrand, f, &other, &params)?)
        } else {
            None
        };
        (
            indep,
            Some(pricing_measure_check(&sol, &claim, &integrand, &bundle, &params)?),
        )
    } else {
        (None, None)
    };

    let gaps_nonnegative = scan
        .iter()
        .chain(&independent_optimizer_gap)
        .all(DualReport::gap_nonnegative);
    let estimators_agree = scan.iter().all(DualReport::estimators_agree);
    let passed = gaps_nonnegative && estimators_agree && pricing_measure.is_none_or(|p| p.passed);
    let summary = format!(
        "{} specs, smallest gap at {}, gaps nonnegative: {gaps_nonnegative}, estimators agree: {estimators_agree}",
        scan.len(),
        min_gap_spec
    );
    let body = DualBody {
        claim: entropic_pricer_core::pricing::claim_id(&claim),
        method: sol.method,
        f,
        min_gap_spec,
        independent_optimizer_gap,
        pricing_measure,
        gaps_nonnegative,
        estimators_agree,
        scan,
    };
    let out = out_dir(Some(&cfg), opts);
    let files = vec![
        out.json("dual.json", "dual", &body)?,
        out.text("dual_scan.csv", &scan_csv(&body.scan))?,
    ];
    Ok(Outcome { passed, files, summary })
}

#[derive(Debug, Serialize)]
struct TrackBody {
    claim: String,
    method: SolverMethod,
    #[serde(rename = "Y0")]
    y0: f64,
    delta: InstRiskMeasure,
    reports: Vec<TrackReport>,
}

fn hedge_spec(name: &HedgeName, n1: usize) -> Result<HedgeSpec, CliError> {
    match name {
        HedgeName::Constant(h) => Ok(HedgeSpec::Constant(vec![*h; n1])),
        HedgeName::Named(s) => match s.as_str() {
            "optimal" => Ok(HedgeSpec::Optimal),
            "follow_z1" => Ok(HedgeSpec::FollowZ1),
            other => Err(CliError::Config(format!(
                "unknown hedge {other:?}; use \"optimal\", \"follow_z1\" or a number"
            ))),
        },
    }
}

fn file_label(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn cmd_track(cfg: &RunConfig, opts: &RunOptions) -> Result<Outcome, CliError> {
    let cfg = with_seed(cfg, opts);
    let claim = cfg.claim()?;
    let pricer = pricer(&cfg)?;
    let params = pricer.params().clone();
    let integrand = pricer.integrand().clone();
    let lambda = params
        .constant_lambda()
        .ok_or_else(|| CliError::Config("tracking needs a constant drift".into()))?
        .to_vec();
    let k = match cfg.tracking.k.or(integrand.quadratic_weight()) {
        Some(k) => k,
        None => {
            return Err(CliError::Config(
                "tracking.k is required for tabulated integrands".into(),
            ))
        }
    };
    let delta = match cfg.tracking.delta {
        DeltaKind::Quadratic => InstRiskMeasure::quadratic(k, &lambda, params.n2())?,
        DeltaKind::FromRho => delta_from_rho(&integrand, k, &lambda)?,
    };
    // The optimal hedge has vanishing risk when δ induces the pricing ρ.
    let vanishing_tol = match (&delta, integrand.quadratic_weight()) {
        (InstRiskMeasure::QuadraticDelta { k: kd, .. }, Some(kr)) if *kd == kr => Some(RISK_TOL_CLOSED_FORM),
        (InstRiskMeasure::QuadraticDelta { .. }, _) => None,
        (InstRiskMeasure::FromRho { .. }, _) => Some(RISK_TOL_NUMERIC),
    };
    let hedges = cfg
        .tracking
        .hedges
        .iter()
        .map(|h| hedge_spec(h, params.n1()))
        .collect::<Result<Vec<_>, _>>()?;
    let sol = pricer.solve(&claim)?;
    let bundle = simulate(
        &params,
        pricer.grid(),
        cfg.tracking.paths,
        cfg.solver.seed.wrapping_add(2),
    )?;

    let out = out_dir(Some(&cfg), opts);
    let mut files = Vec::new();
    let mut reports = Vec::new();
    let mut passed = true;
    let mut summary = Vec::new();
    for hedge in &hedges {
        let r = tracking_simulation(&sol, hedge, &bundle, &delta, &integrand, &params)?;
        let min_risk = r.steps.iter().map(|s| s.mean_risk).fold(f64::INFINITY, f64::min);
        let max_risk = r.steps.iter().map(|s| s.mean_risk).fold(f64::NEG_INFINITY, f64::max);
        passed &= min_risk >= RISK_FLOOR;
        if let (HedgeSpec::Optimal, Some(tol)) = (hedge, vanishing_tol) {
            passed &= max_risk <= tol;
        }
        summary.push(format!("{}: mean risk {:.3e}", r.hedge, r.mean_risk));
        files.push(out.text(&format!("track_{}.csv", file_label(&r.hedge)), &r.per_step_csv())?);
        reports.push(r);
    }
    let body = TrackBody {
        claim: entropic_pricer_core::pricing::claim_id(&claim),
        method: sol.method,
        y0: sol.y0,
        delta,
        reports,
    };
    files.insert(0, out.json("track.json", "track", &body)?);
    Ok(Outcome {
        passed,
        files,
        summary: summary.join("; "),
    })
}

#[derive(Debug, Serialize)]
struct CheckBody {
    family: IntegrandKind,
    growth: f64,
    radius: f64,
    per_axis: usize,
    admissible: bool,
    all_hold: bool,
    report: ConditionReport,
}

pub fn cmd_check_integrand(cfg: &RunConfig, opts: &RunOptions) -> Result<Outcome, CliError> {
    let integrand = cfg.integrand()?;
    let grid = sample_grid(integrand.dim(), cfg.check.radius, cfg.check.per_axis);
    let report = integrand.check_conditions(&grid)?;
    let body = CheckBody {
        family: cfg.integrand.family,
        growth: integrand.growth(),
        radius: cfg.check.radius,
        per_axis: cfg.check.per_axis,
        admissible: report.admissible(),
        all_hold: report.all_hold(),
        report,
    };
    let out = out_dir(Some(cfg), opts);
    let files = vec![out.json("check_integrand.json", "check-integrand", &body)?];
    Ok(Outcome {
        passed: body.admissible,
        files,
        summary: format!(
            "admissible: {}, all conditions hold: {} ({} samples)",
            body.admissible, body.all_hold, body.report.samples
        ),
    })
}

pub const DEFAULT_SELFCHECK_SEED: u64 = 42;

pub fn cmd_selfcheck(opts: &RunOptions) -> Result<(Outcome, SelfcheckReport), CliError> {
    let report = run_selfcheck(opts.seed.unwrap_or(DEFAULT_SELFCHECK_SEED))?;
    let out = out_dir(None, opts);
    let files = vec![out.json("selfcheck.json", "selfcheck", &report)?];
    let outcome = Outcome {
        passed: report.passed,
        files,
        summary: report.table(),
    };
    Ok((outcome, report))
}
