use entropic_pricer_core::bsde::solve_pde_fd;
use entropic_pricer_core::market_paths::simulate;
use entropic_pricer_core::tracking::{tracking_simulation, HedgeSpec};
use entropic_pricer_core::*;

const LAMBDA: f64 = 0.2;

fn run(claim: &Claim, hedge: HedgeSpec) -> TrackReport {
    let p = MarketParams::scalar(0.0, LAMBDA).unwrap();
    let grid = TimeGrid::new(1.0, 20).unwrap();
    let bundle = simulate(&p, grid, 5_000, 21).unwrap();
    let rho = ConvexIntegrand::quadratic(1.0, 1.0, 1).unwrap();
    let sol = solve_pde_fd(claim, &rho, &p, grid, &PdeConfig::default()).unwrap();
    let delta = InstRiskMeasure::quadratic(1.0, &[LAMBDA], 1).unwrap();
    tracking_simulation(&sol, &hedge, &bundle, &delta, &rho, &p).unwrap()
}

#[test]
fn replicating_hedge_has_no_terminal_error() {
    let p = MarketParams::scalar(0.0, LAMBDA).unwrap();
    let claim = Claim::attainable(3.0, vec![1.0], &p, 1.0).unwrap();
    for hedge in [HedgeSpec::Constant(vec![1.0]), HedgeSpec::FollowZ1] {
        let r = run(&claim, hedge);
        assert_eq!(r.flagged_paths, 0);
        let t = r.terminal_error;
        assert!(t.min.abs() <= 1e-10 && t.max.abs() <= 1e-10, "{t:?}");
    }
}

#[test]
fn optimal_hedge_has_vanishing_risk() {
    let claim = Claim::terminal_w2(W2Payoff::Identity, 1.0).unwrap();
    let r = run(&claim, HedgeSpec::Optimal);
    for s in &r.steps {
        assert!(s.mean_risk.abs() <= 1e-3, "t={}: {}", s.t, s.mean_risk);
        assert!(s.mean_abs_residual <= 1e-9);
    }
    assert_eq!(r.ties, 0);
}

#[test]
fn zero_and_unit_hedges_carry_closed_form_risk() {
    let claim = Claim::terminal_w2(W2Payoff::Identity, 1.0).unwrap();
    let zero = run(&claim, HedgeSpec::Constant(vec![0.0]));
    let unit = run(&claim, HedgeSpec::Constant(vec![1.0]));
    for (a, b) in zero.steps.iter().zip(&unit.steps) {
        assert!((a.mean_risk - 0.02).abs() < 1e-3, "{}", a.mean_risk);
        assert!((b.mean_risk - 0.32).abs() < 1e-3, "{}", b.mean_risk);
    }
}

#[test]
fn per_step_csv_layout() {
    let claim = Claim::terminal_w2(W2Payoff::Identity, 1.0).unwrap();
    let r = run(&claim, HedgeSpec::Optimal);
    let csv = r.per_step_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,mean_risk,sd_risk,mean_error"));
    assert_eq!(lines.count(), r.steps.len());
    let json = serde_json::to_value(&r).unwrap();
    assert!(json["terminal_error"]["q95"].is_number());
}
