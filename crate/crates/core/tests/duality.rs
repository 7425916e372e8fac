use entropic_pricer_core::bsde::solve_pde_fd;
use entropic_pricer_core::duality::{
    duality_gap, entropy_hellinger, entropy_penalty, optimizer_measure, pricing_measure_check, scan_family,
};
use entropic_pricer_core::market_paths::simulate;
use entropic_pricer_core::*;

struct Setup {
    params: MarketParams,
    grid: TimeGrid,
    bundle: PathBundle,
}

fn setup(lambda: f64) -> Setup {
    let params = MarketParams::scalar(0.0, lambda).unwrap();
    let grid = TimeGrid::new(1.0, 20).unwrap();
    let bundle = simulate(&params, grid, 20_000, 5).unwrap();
    Setup { params, grid, bundle }
}

fn identity() -> Claim {
    Claim::terminal_w2(W2Payoff::Identity, 1.0).unwrap()
}

#[test]
fn gap_is_nonnegative_over_the_scan_family() {
    let s = setup(0.2);
    for k in [1.0, 2.0] {
        let rho = ConvexIntegrand::quadratic(k, k, 1).unwrap();
        let sol = solve_pde_fd(&identity(), &rho, &s.params, s.grid, &PdeConfig::default()).unwrap();
        let f = Estimate::exact(sol.y0);
        for spec in scan_family(1) {
            let r = duality_gap(&identity(), &spec, &rho, f, &s.bundle, &s.params).unwrap();
            assert!(r.gap_nonnegative(), "{}: gap {} se {}", r.spec, r.gap, r.gap_stderr);
            assert!(r.estimators_agree(), "{}", r.spec);
            assert!(r.sandwich_holds(k), "{}", r.spec);
        }
    }
}

#[test]
fn optimizer_closes_the_gap() {
    let s = setup(0.0);
    for k in [1.0, 2.0] {
        let rho = ConvexIntegrand::quadratic(k, k, 1).unwrap();
        let sol = solve_pde_fd(&identity(), &rho, &s.params, s.grid, &PdeConfig::default()).unwrap();
        let spec = optimizer_measure(&sol, &rho).unwrap();
        let r = duality_gap(&identity(), &spec, &rho, Estimate::exact(sol.y0), &s.bundle, &s.params).unwrap();
        assert!(r.gap.abs() <= 3.0 * r.gap_stderr + 1e-3, "k={k}: gap {}", r.gap);
        assert!((r.e_q_xi.mean - k).abs() < 4.0 * r.e_q_xi.stderr);
    }
}

#[test]
fn pricing_measure_reprices_the_claim() {
    let s = setup(0.0);
    for k in [1.0, 2.0] {
        let rho = ConvexIntegrand::quadratic(k, k, 1).unwrap();
        let sol = solve_pde_fd(&identity(), &rho, &s.params, s.grid, &PdeConfig::default()).unwrap();
        let check = pricing_measure_check(&sol, &identity(), &rho, &s.bundle, &s.params).unwrap();
        assert!(check.passed, "k={k}: {check:?}");
    }
}

#[test]
fn unit_weight_penalty_is_relative_entropy() {
    let s = setup(0.3);
    let rho = ConvexIntegrand::quadratic(1.0, 1.0, 1).unwrap();
    for spec in scan_family(1) {
        let pen = entropy_penalty(&spec, &rho, &s.bundle, &s.params).unwrap();
        let ent = entropy_hellinger(&spec, &s.bundle, &s.params).unwrap();
        assert!(
            (pen.shifted.mean - ent.hellinger.mean).abs() < 1e-12,
            "{}",
            spec.label()
        );
    }
}

#[test]
fn scan_csv_has_one_row_per_spec() {
    let s = setup(0.0);
    let rho = ConvexIntegrand::quadratic(1.0, 1.0, 1).unwrap();
    let reports: Vec<DualReport> = scan_family(1)
        .iter()
        .map(|spec| duality_gap(&identity(), spec, &rho, Estimate::exact(0.5), &s.bundle, &s.params).unwrap())
        .collect();
    let csv = entropic_pricer_core::duality::scan_csv(&reports);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "gamma_spec,E_Q_xi,H_rho,gap,stderr");
    assert_eq!(lines.len(), 1 + reports.len());
    let best = reports.iter().min_by(|a, b| a.gap.total_cmp(&b.gap)).unwrap();
    assert_eq!(best.spec, MeasureSpec::constant(vec![1.0]).label());
}
