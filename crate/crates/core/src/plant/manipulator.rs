//! Planar two-link arm with point masses at the distal end of each link.
//!
//! Joint angles are measured from the horizontal axis (`q2` relative to link
//! one); gravity acts along `-y`. With `s2 = sin q2`, `c2 = cos q2`:
//!
//! ```text
//! M = [ (m1+m2) l1² + m2 l2² + 2 m2 l1 l2 c2    m2 l2² + m2 l1 l2 c2 ]
//!     [ m2 l2² + m2 l1 l2 c2                     m2 l2²              ]
//!
//! C_mat = m2 l1 l2 s2 [ -q̇2   -(q̇1 + q̇2) ]
//!                     [  q̇1    0          ]
//!
//! G = [ (m1+m2) g l1 cos q1 + m2 g l2 cos(q1+q2),  m2 g l2 cos(q1+q2) ]
//! ```
//!
//! `f = M⁻¹(-C_mat q̇ - G)` and `g = M⁻¹`.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::{ControlAffinePlant, PlantError};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManipulatorParams {
    pub masses: [f64; 2],
    pub lengths: [f64; 2],
    pub gravity: f64,
    /// Constant offset added to the true uncertainty.
    #[serde(default)]
    pub uncertainty_offset: [f64; 2],
}

impl Default for ManipulatorParams {
    fn default() -> Self {
        Self {
            masses: [1.0, 1.0],
            lengths: [1.0, 1.0],
            gravity: 9.81,
            uncertainty_offset: [0.0, 0.0],
        }
    }
}

impl ManipulatorParams {
    pub fn validate(&self) -> Result<(), PlantError> {
        if self
            .masses
            .iter()
            .chain(&self.lengths)
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(PlantError::InvalidParameters(
                "link masses and lengths must be positive".into(),
            ));
        }
        if !self.gravity.is_finite() {
            return Err(PlantError::InvalidParameters(
                "gravity must be finite".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoLinkManipulator {
    pub params: ManipulatorParams,
}

impl TwoLinkManipulator {
    pub fn new(params: ManipulatorParams) -> Result<Self, PlantError> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn inertia(&self, q: &[f64]) -> Matrix2<f64> {
        let [m1, m2] = self.params.masses;
        let [l1, l2] = self.params.lengths;
        let c2 = q[1].cos();
        let m11 = (m1 + m2) * l1 * l1 + m2 * l2 * l2 + 2.0 * m2 * l1 * l2 * c2;
        let m12 = m2 * l2 * l2 + m2 * l1 * l2 * c2;
        let m22 = m2 * l2 * l2;
        Matrix2::new(m11, m12, m12, m22)
    }

    /// Coriolis/centrifugal matrix with `C_mat q̇` the velocity force.
    pub fn coriolis_matrix(&self, q: &[f64], qd: &[f64]) -> Matrix2<f64> {
        let [_, m2] = self.params.masses;
        let [l1, l2] = self.params.lengths;
        let h = m2 * l1 * l2 * q[1].sin();
        Matrix2::new(-h * qd[1], -h * (qd[0] + qd[1]), h * qd[0], 0.0)
    }

    pub fn gravity_vector(&self, q: &[f64]) -> Vector2<f64> {
        let [m1, m2] = self.params.masses;
        let [l1, l2] = self.params.lengths;
        let g = self.params.gravity;
        let c12 = (q[0] + q[1]).cos();
        Vector2::new(
            (m1 + m2) * g * l1 * q[0].cos() + m2 * g * l2 * c12,
            m2 * g * l2 * c12,
        )
    }

    /// Known drift `f` and input map `g = M⁻¹`.
    pub fn manipulator_fg(
        &self,
        q: &[f64],
        qd: &[f64],
    ) -> Result<(Vector2<f64>, Matrix2<f64>), PlantError> {
        let m = self.inertia(q);
        let det = m.determinant();
        if !(det.abs() > 1e-9) {
            return Err(PlantError::SingularInputMap { det });
        }
        let m_inv = m
            .try_inverse()
            .ok_or(PlantError::SingularInputMap { det })?;
        let qdv = Vector2::new(qd[0], qd[1]);
        let force = -(self.coriolis_matrix(q, qd) * qdv) - self.gravity_vector(q);
        Ok((m_inv * force, m_inv))
    }

    /// `d(x) = [5 sin q1 + 3 cos q2, 3 cos q1 + 5 sin q2 + 30] + Δd`.
    pub fn true_uncertainty(&self, q: &[f64]) -> Vector2<f64> {
        let [o1, o2] = self.params.uncertainty_offset;
        Vector2::new(
            5.0 * q[0].sin() + 3.0 * q[1].cos() + o1,
            3.0 * q[0].cos() + 5.0 * q[1].sin() + 30.0 + o2,
        )
    }
}

impl ControlAffinePlant for TwoLinkManipulator {
    fn order(&self) -> usize {
        2
    }

    fn input_dim(&self) -> usize {
        2
    }

    fn known_dynamics(&self, x: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>), PlantError> {
        let (f, g) = self.manipulator_fg(&x[0..2], &x[2..4])?;
        Ok((
            DVector::from_column_slice(f.as_slice()),
            DMatrix::from_column_slice(2, 2, g.as_slice()),
        ))
    }

    fn uncertainty(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(self.true_uncertainty(&x[0..2]).as_slice())
    }
}
