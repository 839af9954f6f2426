//! Prescribed-time barrier machinery: blow-up function, the time-varying
//! backstepping chain `h_{i+1} = ḣ_i + c_i φ(t) h_i`, gain selection, and the
//! robust input constraint handed to the safety filter.
//!
//! The chain is implemented for relative degree two (position-level barriers
//! on a second-order plant). [`Barrier`] implementations supply analytic
//! gradient and Hessian.

mod blowup;
mod chain;
mod constraint;
mod gains;

pub use blowup::WindowParams;
pub use chain::{eval_chain, BallBarrier, Barrier, ChainEval, LinearBarrier};
pub use constraint::{
    assemble_constraint, constraint_from_chain, KnownDynamics, LinearConstraint,
    UncertaintyEstimate,
};
pub use gains::{gain_lower_bound, select_gains, GainPolicy};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BarrierError {
    #[error("time {t} precedes window start {t0}")]
    OutOfWindow { t: f64, t0: f64 },
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("chain of order {0} is not supported (only relative degree 2)")]
    UnsupportedOrder(usize),
    #[error("state has dimension {got}, barrier chain expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}
