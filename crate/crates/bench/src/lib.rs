//! Fixtures shared by the benchmarks.

use entropic_pricer_core::market_paths::simulate;
use entropic_pricer_core::{Claim, ConvexIntegrand, MarketParams, PathBundle, TimeGrid, W2Payoff};

pub struct Fixture {
    pub params: MarketParams,
    pub grid: TimeGrid,
    pub integrand: ConvexIntegrand,
    pub claim: Claim,
}

/// Capped square of `W²_T` under a quadratic integrand, `λ = 0.2`.
pub fn capped_square(steps: usize) -> Fixture {
    Fixture {
        params: MarketParams::scalar(0.0, 0.2).expect("valid market"),
        grid: TimeGrid::new(1.0, steps).expect("valid grid"),
        integrand: ConvexIntegrand::quadratic(0.25, 0.25, 1).expect("valid integrand"),
        claim: Claim::terminal_w2(W2Payoff::CappedSquare { cap: 4.0 }, 1.0).expect("valid claim"),
    }
}

impl Fixture {
    pub fn bundle(&self, paths: usize) -> PathBundle {
        simulate(&self.params, self.grid, paths, 7).expect("simulation")
    }
}
