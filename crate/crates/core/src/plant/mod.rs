//! Control-affine plants in controllable canonical form
//!
//! ```text
//!     ẋ_i = x_{i+1},                 i = 1..n-1
//!     ẋ_n = f(x) + g(x) u + d(x)
//! ```
//!
//! with `x_i ∈ ℝ^m`. `f` and `g` are known to the controller; `d` is the
//! true uncertainty, used only to simulate and to generate training data.

mod manipulator;
mod reference;

pub use manipulator::{ManipulatorParams, TwoLinkManipulator};
pub use reference::{
    generate_training_data, CircularReference, GridSpec, PdController, ReferenceSignal,
};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("input map is singular (det = {det:e})")]
    SingularInputMap { det: f64 },
    #[error("invalid plant parameters: {0}")]
    InvalidParameters(String),
}

pub trait ControlAffinePlant: Send + Sync {
    /// Integrator chain length `n`.
    fn order(&self) -> usize;
    /// Input dimension `m`.
    fn input_dim(&self) -> usize;

    fn state_dim(&self) -> usize {
        self.order() * self.input_dim()
    }

    /// Known drift `f(x)` and input map `g(x)`.
    fn known_dynamics(&self, x: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>), PlantError>;

    /// True uncertainty `d(x)`.
    fn uncertainty(&self, x: &[f64]) -> DVector<f64>;

    /// `ẋ` under input `u`.
    fn derivative(&self, x: &[f64], u: &DVector<f64>) -> Result<DVector<f64>, PlantError> {
        let m = self.input_dim();
        let n = self.order();
        let (f, g) = self.known_dynamics(x)?;
        let accel = f + g * u + self.uncertainty(x);
        let mut dx = DVector::zeros(n * m);
        for k in 0..(n - 1) * m {
            dx[k] = x[k + m];
        }
        for j in 0..m {
            dx[(n - 1) * m + j] = accel[j];
        }
        Ok(dx)
    }
}

/// `ẍ = u + d` with a constant disturbance `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubleIntegrator {
    pub disturbance: Vec<f64>,
}

impl DoubleIntegrator {
    pub fn new(dim: usize) -> Self {
        Self {
            disturbance: vec![0.0; dim],
        }
    }
}

impl ControlAffinePlant for DoubleIntegrator {
    fn order(&self) -> usize {
        2
    }

    fn input_dim(&self) -> usize {
        self.disturbance.len()
    }

    fn known_dynamics(&self, _x: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>), PlantError> {
        let m = self.input_dim();
        Ok((DVector::zeros(m), DMatrix::identity(m, m)))
    }

    fn uncertainty(&self, _x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(&self.disturbance)
    }
}
