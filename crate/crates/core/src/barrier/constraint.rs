use nalgebra::{DMatrix, DVector};

use super::{eval_chain, Barrier, BarrierError, ChainEval, WindowParams};

/// Half-space `a·u >= b` on the control input.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub a: DVector<f64>,
    pub b: f64,
}

impl LinearConstraint {
    pub fn margin(&self, u: &DVector<f64>) -> f64 {
        self.a.dot(u) - self.b
    }
}

/// Known drift and input map at the current state.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownDynamics {
    pub drift: DVector<f64>,
    pub input_map: DMatrix<f64>,
}

/// Estimate of the unknown acceleration term with its error bound.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyEstimate {
    pub mean: DVector<f64>,
    pub bound: DVector<f64>,
}

impl UncertaintyEstimate {
    pub fn zero(m: usize) -> Self {
        Self {
            mean: DVector::zeros(m),
            bound: DVector::zeros(m),
        }
    }
}

/// Robust constraint `h*₃(t, x, u) >= 0` written as `a·u >= b`, where
///
/// `h*₃ = ∂h2/∂x1·x2 + ∂h2/∂t + c2 φ h2 + ∂h2/∂x2 (f + g u + μ) - Σ_j |∂h2/∂x2_j| η_j`.
pub fn constraint_from_chain(
    chain: &ChainEval,
    x2: &[f64],
    final_gain: f64,
    dynamics: &KnownDynamics,
    estimate: &UncertaintyEstimate,
) -> LinearConstraint {
    let x2 = DVector::from_column_slice(x2);
    let grad = &chain.dh2_dx2;
    let a = dynamics.input_map.tr_mul(grad);
    let robust: f64 = grad
        .iter()
        .zip(estimate.bound.iter())
        .map(|(g, e)| g.abs() * e.abs())
        .sum();
    let free = chain.dh2_dx1.dot(&x2)
        + chain.dh2_dt
        + final_gain * chain.phi * chain.h2
        + grad.dot(&(&dynamics.drift + &estimate.mean))
        - robust;
    LinearConstraint { a, b: -free }
}

/// Evaluates the chain and assembles the robust input constraint.
pub fn assemble_constraint(
    t: f64,
    x: &[f64],
    barrier: &dyn Barrier,
    gains: &[f64],
    window: &WindowParams,
    dynamics: &KnownDynamics,
    estimate: &UncertaintyEstimate,
) -> Result<(LinearConstraint, ChainEval), BarrierError> {
    let chain = eval_chain(t, x, barrier, gains, window)?;
    let m = barrier.dim();
    let c = constraint_from_chain(&chain, &x[m..], gains[1], dynamics, estimate);
    Ok((c, chain))
}
