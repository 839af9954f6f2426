//! Minimally-invasive safety filter
//!
//! ```text
//!     minimize    ‖u - u_nom‖²
//!     subject to  a_i·u >= b_i        (barrier rows)
//!                 lower <= u <= upper (optional box)
//! ```
//!
//! [`solve`] uses a dual active-set method specialised to the identity
//! Hessian: it starts from the unconstrained minimiser `u_nom`, adds the
//! most violated row, and drops rows whose multipliers would turn negative.
//! [`solve_oracle`] enumerates every candidate active set instead and is
//! meant for verification.
//!
//! When the barrier rows cannot all hold, both solvers fall back to the
//! smallest uniform slack `s` for which `a_i·u >= b_i - s` is feasible and
//! return the projection onto that relaxed polyhedron.

mod active_set;
mod oracle;

use nalgebra::DVector;
use thiserror::Error;

use crate::barrier::LinearConstraint;

pub use active_set::solve;
pub use oracle::solve_oracle;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("solver did not terminate within {0} iterations")]
    IterationLimit(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub nominal: DVector<f64>,
    pub constraints: Vec<LinearConstraint>,
    pub bounds: Option<(DVector<f64>, DVector<f64>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    InfeasibleRelaxed,
}

impl QpStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            QpStatus::Optimal => "optimal",
            QpStatus::InfeasibleRelaxed => "infeasible_relaxed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u: DVector<f64>,
    pub status: QpStatus,
    /// Rows (barrier rows first, then box rows) that hold with equality.
    pub active_set: Vec<usize>,
    /// Multiplier per row.
    pub multipliers: Vec<f64>,
    /// Uniform relaxation applied to the barrier rows; zero when optimal.
    pub slack: f64,
    pub kkt_residual: f64,
}

impl QpSolution {
    pub fn objective(&self, nominal: &DVector<f64>) -> f64 {
        (&self.u - nominal).norm_squared()
    }
}

/// Flattened row `a·u >= b`; `hard` rows are never relaxed.
#[derive(Debug, Clone)]
pub(crate) struct Row {
    pub a: DVector<f64>,
    pub b: f64,
    pub hard: bool,
}

impl QpProblem {
    pub fn new(nominal: DVector<f64>, constraints: Vec<LinearConstraint>) -> Self {
        Self {
            nominal,
            constraints,
            bounds: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.nominal.len()
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let m = self.dim();
        if m == 0 {
            return Err(QpError::InvalidProblem("empty decision vector".into()));
        }
        if self.nominal.iter().any(|v| !v.is_finite()) {
            return Err(QpError::InvalidProblem("non-finite nominal input".into()));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.a.len() != m {
                return Err(QpError::InvalidProblem(format!(
                    "row {i} has length {}, expected {m}",
                    c.a.len()
                )));
            }
            if !c.b.is_finite() || c.a.iter().any(|v| !v.is_finite()) {
                return Err(QpError::InvalidProblem(format!("row {i} is not finite")));
            }
        }
        if let Some((lo, hi)) = &self.bounds {
            if lo.len() != m || hi.len() != m {
                return Err(QpError::InvalidProblem(
                    "box bounds have the wrong length".into(),
                ));
            }
            for k in 0..m {
                if lo[k].is_nan() || hi[k].is_nan() || lo[k] > hi[k] {
                    return Err(QpError::InvalidProblem(format!("box bound {k} is empty")));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn rows(&self) -> Vec<Row> {
        let m = self.dim();
        let mut rows: Vec<Row> = self
            .constraints
            .iter()
            .map(|c| Row {
                a: c.a.clone(),
                b: c.b,
                hard: false,
            })
            .collect();
        if let Some((lo, hi)) = &self.bounds {
            for k in 0..m {
                if lo[k].is_finite() {
                    let mut a = DVector::zeros(m);
                    a[k] = 1.0;
                    rows.push(Row {
                        a,
                        b: lo[k],
                        hard: true,
                    });
                }
                if hi[k].is_finite() {
                    let mut a = DVector::zeros(m);
                    a[k] = -1.0;
                    rows.push(Row {
                        a,
                        b: -hi[k],
                        hard: true,
                    });
                }
            }
        }
        rows
    }

    /// Point inside the box closest to the nominal input.
    pub(crate) fn box_projection(&self) -> DVector<f64> {
        match &self.bounds {
            Some((lo, hi)) => DVector::from_iterator(
                self.dim(),
                self.nominal
                    .iter()
                    .enumerate()
                    .map(|(k, v)| v.max(lo[k]).min(hi[k])),
            ),
            None => self.nominal.clone(),
        }
    }
}

pub(crate) fn feasibility_tol(row: &Row, u: &DVector<f64>) -> f64 {
    1e-9 * (1.0 + row.b.abs() + row.a.norm() * u.norm())
}

/// Rows with the uniform relaxation applied to the soft ones.
pub(crate) fn relaxed(rows: &[Row], slack: f64) -> Vec<Row> {
    rows.iter()
        .map(|r| Row {
            a: r.a.clone(),
            b: if r.hard { r.b } else { r.b - slack },
            hard: r.hard,
        })
        .collect()
}

/// Result of an exact projection attempt on a fixed set of rows.
pub(crate) struct Projection {
    pub u: DVector<f64>,
    pub multipliers: Vec<f64>,
}

/// Smallest uniform slack making the rows feasible, found by bisection with
/// `project` as the feasibility test, followed by the projection at that slack.
pub(crate) fn relax_and_project<F>(
    problem: &QpProblem,
    rows: &[Row],
    mut project: F,
) -> Result<(Projection, f64), QpError>
where
    F: FnMut(&[Row]) -> Result<Option<Projection>, QpError>,
{
    let anchor = problem.box_projection();
    let mut hi = rows
        .iter()
        .filter(|r| !r.hard)
        .map(|r| r.b - r.a.dot(&anchor))
        .fold(0.0f64, f64::max);
    let mut lo = 0.0f64;
    let mut best = project(&relaxed(rows, hi))?;
    if best.is_none() {
        // round-off at the anchor; widen until feasible
        let mut widen = hi.abs().max(1e-12);
        for _ in 0..64 {
            hi += widen;
            widen *= 2.0;
            best = project(&relaxed(rows, hi))?;
            if best.is_some() {
                break;
            }
        }
    }
    let mut best =
        best.ok_or_else(|| QpError::InvalidProblem("hard constraints are infeasible".into()))?;
    for _ in 0..200 {
        if hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match project(&relaxed(rows, mid))? {
            Some(p) => {
                hi = mid;
                best = p;
            }
            None => lo = mid,
        }
    }
    Ok((best, hi))
}

pub(crate) fn finish(
    problem: &QpProblem,
    rows: &[Row],
    proj: Projection,
    slack: f64,
    status: QpStatus,
) -> QpSolution {
    let rows = relaxed(rows, slack);
    let u = proj.u;
    let mut stationarity = &u - &problem.nominal;
    let mut worst: f64 = 0.0;
    let mut active_set = Vec::new();
    for (i, (r, lam)) in rows.iter().zip(&proj.multipliers).enumerate() {
        stationarity -= &r.a * *lam;
        let margin = r.a.dot(&u) - r.b;
        worst = worst.max(-margin).max((lam * margin).abs());
        if margin.abs() <= feasibility_tol(r, &u) {
            active_set.push(i);
        }
    }
    let kkt_residual = worst.max(stationarity.amax());
    QpSolution {
        u,
        status,
        active_set,
        multipliers: proj.multipliers,
        slack,
        kkt_residual,
    }
}
