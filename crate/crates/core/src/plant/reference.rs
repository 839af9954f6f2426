use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ControlAffinePlant;
use crate::gp::{GpError, TrainingSet};

pub trait ReferenceSignal: Send + Sync {
    fn position(&self, t: f64) -> DVector<f64>;
    fn velocity(&self, t: f64) -> DVector<f64>;
}

/// `q_d(t) = center + radius [cos(t + phase), sin(t + phase)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircularReference {
    pub center: [f64; 2],
    pub radius: f64,
    pub phase: f64,
}

impl Default for CircularReference {
    fn default() -> Self {
        use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
        Self {
            center: [FRAC_PI_2, 0.0],
            radius: PI,
            phase: -FRAC_PI_4,
        }
    }
}

impl ReferenceSignal for CircularReference {
    fn position(&self, t: f64) -> DVector<f64> {
        let a = t + self.phase;
        DVector::from_vec(vec![
            self.radius * a.cos() + self.center[0],
            self.radius * a.sin() + self.center[1],
        ])
    }

    fn velocity(&self, t: f64) -> DVector<f64> {
        let a = t + self.phase;
        DVector::from_vec(vec![-self.radius * a.sin(), self.radius * a.cos()])
    }
}

/// Diagonal PD tracking law `u = Kp (q_d - x₁) + Kd (q̇_d - x₂)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdController {
    pub kp: Vec<f64>,
    pub kd: Vec<f64>,
}

impl PdController {
    pub fn nominal(&self, t: f64, x: &[f64], reference: &dyn ReferenceSignal) -> DVector<f64> {
        let m = self.kp.len();
        let qd = reference.position(t);
        let vd = reference.velocity(t);
        DVector::from_fn(m, |j, _| {
            self.kp[j] * (qd[j] - x[j]) + self.kd[j] * (vd[j] - x[m + j])
        })
    }
}

/// Uniform lattice over the GP input slice of the state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// State components that form the GP input.
    pub input_indices: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Lattice points per input dimension; zero yields an empty data set.
    pub points_per_dim: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), GpError> {
        let d = self.input_indices.len();
        if d == 0 || self.lower.len() != d || self.upper.len() != d {
            return Err(GpError::InvalidTrainingSet(
                "grid bounds must match the GP input indices".into(),
            ));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(u >= l)) {
            return Err(GpError::InvalidTrainingSet(
                "grid upper bound below lower bound".into(),
            ));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        let d = self.input_indices.len();
        let r = self.points_per_dim;
        if r == 0 {
            return Vec::new();
        }
        let axis = |k: usize, i: usize| {
            if r == 1 {
                0.5 * (self.lower[k] + self.upper[k])
            } else {
                self.lower[k] + (self.upper[k] - self.lower[k]) * i as f64 / (r - 1) as f64
            }
        };
        let total = r.pow(d as u32);
        (0..total)
            .map(|mut idx| {
                // first input index varies slowest
                let mut p = vec![0.0; d];
                for k in (0..d).rev() {
                    p[k] = axis(k, idx % r);
                    idx /= r;
                }
                p
            })
            .collect()
    }

    /// Embeds a GP input into a full state with the other components zero.
    pub fn embed(&self, input: &[f64], state_dim: usize) -> Vec<f64> {
        let mut x = vec![0.0; state_dim];
        for (k, &i) in self.input_indices.iter().enumerate() {
            x[i] = input[k];
        }
        x
    }
}

/// Noisy samples `y = d(x) + ε` of the plant's true uncertainty on the grid.
pub fn generate_training_data<R: Rng + ?Sized>(
    plant: &dyn ControlAffinePlant,
    grid: &GridSpec,
    noise_std: &[f64],
    rng: &mut R,
) -> Result<TrainingSet, GpError> {
    grid.validate()?;
    let m = plant.input_dim();
    if noise_std.len() != m {
        return Err(GpError::InvalidTrainingSet(format!(
            "{} noise levels for {m} outputs",
            noise_std.len()
        )));
    }
    let points = grid.points();
    let n = points.len();
    let d = grid.input_indices.len();
    let mut inputs = DMatrix::zeros(n, d);
    let mut outputs = DMatrix::zeros(n, m);
    for (i, p) in points.iter().enumerate() {
        let x = grid.embed(p, plant.state_dim());
        let y = plant.uncertainty(&x);
        for k in 0..d {
            inputs[(i, k)] = p[k];
        }
        for j in 0..m {
            let eps = if noise_std[j] > 0.0 {
                Normal::new(0.0, noise_std[j])
                    .map_err(|e| GpError::InvalidTrainingSet(e.to_string()))?
                    .sample(rng)
            } else {
                0.0
            };
            outputs[(i, j)] = y[j] + eps;
        }
    }
    // noise-free samples still need a positive nominal noise level for fitting
    let nominal: Vec<f64> = noise_std
        .iter()
        .map(|s| if *s > 0.0 { *s } else { 1e-6 })
        .collect();
    TrainingSet::new(inputs, outputs, nominal)
}
