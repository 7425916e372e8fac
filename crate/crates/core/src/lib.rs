//! Convex pricing of bounded claims in an incomplete Brownian market.
//!
//! The price of a claim `ξ` is the initial value `Y₀` of the quadratic BSDE
//! `dY = −(−Z¹·λ + ρ(Z²))dt + Z¹dW¹ + Z²dW²`, `Y_T = ξ`, where the asset is
//! `S = S₀ + ∫λ dt + W¹` and `W²` is an unhedgeable factor. The same price is
//! the supremum of `E_Q[ξ] − E_Q[∫ρ̂(γ)dt]` over martingale measures with
//! density `ℰ(−λ·W¹ + γ·W²)`, and the optimal hedge tracks the BSDE with zero
//! instantaneous risk.
//!
//! Modules:
//! - [`convex_integrand`]: the penalty ρ, its conjugate and growth checks.
//! - [`market_paths`]: path simulation and measure changes.
//! - [`claims`]: payoffs and their declared bounds.
//! - [`bsde`]: regression Monte Carlo and finite-difference solvers plus the
//!   closed-form oracle for quadratic penalties.
//! - [`pricing`]: the pricing functional and its axiom probes.
//! - [`duality`]: entropy penalties and duality gaps.
//! - [`tracking`]: instantaneous risk and optimal tracking.

pub mod bsde;
pub mod claims;
pub mod convex_integrand;
pub mod duality;
pub mod error;
pub mod market_paths;
pub mod pricing;
pub mod quadrature;
pub mod stats;
pub mod tracking;

pub use bsde::{BsdeSolution, McConfig, PdeConfig, SolverMethod};
pub use claims::{Claim, ClaimKind, JointPayoff, W2Payoff};
pub use convex_integrand::{ConditionReport, ConvexIntegrand, IntegrandFamily, TableGrid};
pub use duality::DualReport;
pub use error::{PricerError, Result};
pub use market_paths::{Drift, MarketParams, MeasureSpec, PathBundle, TimeGrid};
pub use pricing::{PriceReport, Pricer, SolverChoice};
pub use stats::Estimate;
pub use tracking::{InstRiskMeasure, TrackReport};
