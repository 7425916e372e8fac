use thiserror::Error;

/// Errors raised by the pricing library. Every variant names the module and
/// operation that produced it so that front ends can report the failure site.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PricerError {
    #[error("{module}::{op}: domain error: {msg}")]
    Domain {
        module: &'static str,
        op: &'static str,
        msg: String,
    },

    #[error("{module}::{op}: configuration error: {msg}")]
    Config {
        module: &'static str,
        op: &'static str,
        msg: String,
    },

    #[error("{module}::{op}: capacity exceeded: {msg}")]
    Capacity {
        module: &'static str,
        op: &'static str,
        msg: String,
    },

    #[error("bsde_solver::solve_regression_mc: regression basis degenerate at time slice {slice} (condition number {cond:.3e})")]
    BasisDegradation { slice: usize, cond: f64 },

    #[error("bsde_solver::solve_regression_mc: Z truncation active on {:.2}% of samples (limit 10%)", rate * 100.0)]
    Truncation { rate: f64 },

    #[error("market_paths::density_process: {flagged} of {total} paths overflowed (limit 0.1%)")]
    DensityOverflow { flagged: usize, total: usize },

    #[error("bsde_solver::solve_pde_fd: CFL condition violated, dt = {dt:.3e} > h^2/2 = {limit:.3e}")]
    Cfl { dt: f64, limit: f64 },
}

pub type Result<T> = std::result::Result<T, PricerError>;

impl PricerError {
    pub(crate) fn domain(module: &'static str, op: &'static str, msg: impl Into<String>) -> Self {
        Self::Domain {
            module,
            op,
            msg: msg.into(),
        }
    }

    pub(crate) fn config(module: &'static str, op: &'static str, msg: impl Into<String>) -> Self {
        Self::Config {
            module,
            op,
            msg: msg.into(),
        }
    }

    pub(crate) fn capacity(module: &'static str, op: &'static str, msg: impl Into<String>) -> Self {
        Self::Capacity {
            module,
            op,
            msg: msg.into(),
        }
    }

    /// True for errors caused by bad input configuration rather than by a
    /// numerical failure during the run.
    pub fn is_config(&self) -> bool {
        matches!(self, Self::Config { .. } | Self::Cfl { .. })
    }
}
