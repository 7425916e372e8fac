use entropic_pricer_core::bsde::{cole_hopf_oracle, solve_pde_fd, solve_regression_mc};
use entropic_pricer_core::market_paths::simulate;
use entropic_pricer_core::quadrature::QuadConfig;
use entropic_pricer_core::*;

fn pde(nodes: usize) -> PdeConfig {
    PdeConfig {
        nodes,
        ..PdeConfig::default()
    }
}

#[test]
fn regression_and_pde_agree_on_markovian_claims() {
    let p = MarketParams::scalar(0.0, 0.2).unwrap();
    let grid = TimeGrid::new(1.0, 25).unwrap();
    let bundle = simulate(&p, grid, 20_000, 11).unwrap();
    let rho = ConvexIntegrand::quadratic(1.0, 1.0, 1).unwrap();
    let claims = [
        Claim::terminal_w2(W2Payoff::Identity, 1.0).unwrap(),
        Claim::terminal_w2(W2Payoff::Cos, 1.0).unwrap(),
        Claim::terminal_joint(JointPayoff::CosSum, 2.0).unwrap(),
        Claim::attainable(1.0, vec![0.5], &p, 1.0).unwrap(),
    ];
    for claim in &claims {
        let mc = solve_regression_mc(claim, &rho, &p, &bundle, &McConfig::default()).unwrap();
        let fd = solve_pde_fd(claim, &rho, &p, grid, &pde(201)).unwrap();
        let est = fd.diagnostics.truncation_estimate.unwrap_or(0.0).abs();
        let tol = 3.0 * (mc.stderr + est);
        assert!(
            (mc.y0 - fd.y0).abs() <= tol,
            "{claim:?}: mc {} pde {} tol {tol}",
            mc.y0,
            fd.y0
        );
        assert!(mc.diagnostics.energy.holds);
        assert!(fd.diagnostics.energy.holds);
    }
}

#[test]
fn w2_claims_do_not_depend_on_the_drift() {
    let grid = TimeGrid::new(1.0, 20).unwrap();
    let rho = ConvexIntegrand::quadratic(1.0, 1.0, 1).unwrap();
    let claim = Claim::terminal_w2(W2Payoff::Cos, 1.0).unwrap();
    let mut prices = Vec::new();
    for lambda in [0.0, 0.3, -0.5] {
        let p = MarketParams::scalar(1.0, lambda).unwrap();
        prices.push(solve_pde_fd(&claim, &rho, &p, grid, &pde(201)).unwrap().y0);
    }
    for v in &prices[1..] {
        assert!((v - prices[0]).abs() < 1e-12);
    }
}

#[test]
fn pde_reproduces_closed_form_for_cos() {
    let p = MarketParams::scalar(0.0, 0.0).unwrap();
    let grid = TimeGrid::new(1.0, 10).unwrap();
    let claim = Claim::terminal_w2(W2Payoff::Cos, 1.0).unwrap();
    for k in [0.5, 1.0, 2.0] {
        let rho = ConvexIntegrand::quadratic(k, k, 1).unwrap();
        let oracle = cole_hopf_oracle(f64::cos, &[], k, 1.0, &QuadConfig::default()).unwrap();
        let fd = solve_pde_fd(&claim, &rho, &p, grid, &PdeConfig::default()).unwrap();
        assert!((fd.y0 - oracle).abs() < 1e-3, "k={k}: {} vs {oracle}", fd.y0);
    }
}

#[test]
fn terminal_values_equal_the_claim_on_the_bundle() {
    let p = MarketParams::scalar(0.0, 0.1).unwrap();
    let grid = TimeGrid::new(0.5, 10).unwrap();
    let bundle = simulate(&p, grid, 2_000, 3).unwrap();
    let rho = ConvexIntegrand::quadratic(1.0, 1.0, 1).unwrap();
    let claim = Claim::terminal_joint(JointPayoff::CallSpot { strike: 0.2 }, 5.0).unwrap();
    let mc = solve_regression_mc(&claim, &rho, &p, &bundle, &McConfig::default()).unwrap();
    let fd = solve_pde_fd(&claim, &rho, &p, grid, &pde(101)).unwrap();
    for m in 0..bundle.paths() {
        let xi = claim.evaluate(&bundle, m, &p).unwrap();
        let (s, w) = (bundle.terminal_s(m), bundle.terminal_w2(m));
        assert_eq!(mc.y_at(grid.steps(), s, w).unwrap(), xi);
        assert_eq!(fd.y_at(grid.steps(), s, w).unwrap(), xi);
    }
}

#[test]
fn comparison_principle_on_ordered_claims() {
    let p = MarketParams::scalar(0.0, 0.2).unwrap();
    let grid = TimeGrid::new(1.0, 20).unwrap();
    let rho = ConvexIntegrand::quadratic(1.0, 1.0, 1).unwrap();
    let lo = Claim::terminal_w2(W2Payoff::Digital { level: 0.0 }, 1.0).unwrap();
    let hi = Claim::terminal_w2(W2Payoff::CappedSquare { cap: 1.0 }, 1.0)
        .unwrap()
        .shifted(1.0)
        .unwrap();
    let flo = solve_pde_fd(&lo, &rho, &p, grid, &pde(201)).unwrap().y0;
    let fhi = solve_pde_fd(&hi, &rho, &p, grid, &pde(201)).unwrap().y0;
    assert!(flo <= fhi + 5e-4);
    assert!(flo > 0.0 && flo <= 1.0 + 5e-4);
}

#[test]
fn solver_diagnostics_serialize() {
    let p = MarketParams::scalar(0.0, 0.0).unwrap();
    let grid = TimeGrid::new(1.0, 5).unwrap();
    let rho = ConvexIntegrand::quadratic(1.0, 1.0, 1).unwrap();
    let sol = solve_pde_fd(&Claim::constant(1.0).unwrap(), &rho, &p, grid, &pde(41)).unwrap();
    let v: serde_json::Value = serde_json::from_str(&sol.diagnostics_json()).unwrap();
    for key in ["method", "Y0", "stderr", "truncation_rate", "iterations", "grid"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert_eq!(v["method"], "PdeFd");
}
