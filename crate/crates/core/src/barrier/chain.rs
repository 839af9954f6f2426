use std::fmt::Debug;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{BarrierError, WindowParams};

/// Scalar barrier `h(x₁)` on the position block of the state, with analytic
/// first and second derivatives.
pub trait Barrier: Debug + Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x1: &[f64]) -> f64;
    fn gradient(&self, x1: &[f64]) -> DVector<f64>;
    fn hessian(&self, x1: &[f64]) -> DMatrix<f64>;
}

/// `h(x₁) = aᵀx₁ + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBarrier {
    pub coefficients: Vec<f64>,
    pub offset: f64,
}

impl LinearBarrier {
    pub fn new(coefficients: Vec<f64>, offset: f64) -> Self {
        Self {
            coefficients,
            offset,
        }
    }
}

impl Barrier for LinearBarrier {
    fn dim(&self) -> usize {
        self.coefficients.len()
    }

    fn value(&self, x1: &[f64]) -> f64 {
        self.coefficients
            .iter()
            .zip(x1)
            .map(|(a, x)| a * x)
            .sum::<f64>()
            + self.offset
    }

    fn gradient(&self, _x1: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(&self.coefficients)
    }

    fn hessian(&self, _x1: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(self.dim(), self.dim())
    }
}

/// Ball constraint `h(x₁) = r² - ‖x₁ - c‖²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallBarrier {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Barrier for BallBarrier {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x1: &[f64]) -> f64 {
        let sq: f64 = x1
            .iter()
            .zip(&self.center)
            .map(|(x, c)| (x - c) * (x - c))
            .sum();
        self.radius * self.radius - sq
    }

    fn gradient(&self, x1: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            x1.iter().zip(&self.center).map(|(x, c)| -2.0 * (x - c)),
        )
    }

    fn hessian(&self, _x1: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal_element(self.dim(), self.dim(), -2.0)
    }
}

/// Second-order barrier chain evaluated at `(t, x)` with `x = [x₁; x₂]`.
///
/// `h2 = ḣ1 + c1 φ h1`; the partials are those of `h2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainEval {
    pub h1: f64,
    pub h1_dot: f64,
    pub h2: f64,
    pub dh2_dx1: DVector<f64>,
    pub dh2_dx2: DVector<f64>,
    pub dh2_dt: f64,
    pub phi: f64,
    pub phi_dot: f64,
}

impl ChainEval {
    /// `[h1, h2]`.
    pub fn values(&self) -> [f64; 2] {
        [self.h1, self.h2]
    }
}

/// Evaluates the relative-degree-two chain for the barrier on `x₁`.
///
/// `gains` holds `[c1, c2]`; only `c1` enters `h2`.
pub fn eval_chain(
    t: f64,
    x: &[f64],
    barrier: &dyn Barrier,
    gains: &[f64],
    window: &WindowParams,
) -> Result<ChainEval, BarrierError> {
    let m = barrier.dim();
    if gains.len() != 2 {
        return Err(BarrierError::UnsupportedOrder(gains.len()));
    }
    if x.len() != 2 * m {
        return Err(BarrierError::DimensionMismatch {
            expected: 2 * m,
            got: x.len(),
        });
    }
    let (x1, x2) = x.split_at(m);
    let x2v = DVector::from_column_slice(x2);
    let c1 = gains[0];
    let phi = window.phi(t)?;
    let phi_dot = window.phi_dot(t)?;

    let h1 = barrier.value(x1);
    let grad = barrier.gradient(x1);
    let hess = barrier.hessian(x1);
    let h1_dot = grad.dot(&x2v);
    let h2 = h1_dot + c1 * phi * h1;

    // ∂h2/∂x1 = ∇²h x2 + c1 φ ∇h
    let dh2_dx1 = &hess * &x2v + &grad * (c1 * phi);
    let dh2_dt = c1 * phi_dot * h1;

    Ok(ChainEval {
        h1,
        h1_dot,
        h2,
        dh2_dx1,
        dh2_dx2: grad,
        dh2_dt,
        phi,
        phi_dot,
    })
}
