//! Closed-loop simulation with the prescribed-time safety filter.
//!
//! The controller runs at a fixed period and holds its input between updates;
//! the plant is integrated with classical RK4 at a (possibly finer) step.

mod closed_loop;
mod csv_io;
mod integrate;
mod montecarlo;
mod report;

pub use closed_loop::{ClosedLoop, StepOutput};
pub use csv_io::{
    batch_header, paired_header, trace_header, write_batch_csv, write_paired_csv, write_trace_csv,
};
pub use integrate::{rk4_integrate, rk4_step};
pub use montecarlo::{
    fit_report, run_monte_carlo, run_single, simulate, train_uncertainty_model,
    uncertainty_from_model, FitReport, RunSetup, RunStreams,
};
pub use report::{
    evaluate_run, exponential_bound_check, BatchReport, ExponentialBoundCheck, RunReport,
    WindowVerdict,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barrier::{Barrier, BarrierError, UncertaintyEstimate, WindowParams};
use crate::gp::{BoundEvaluator, GpError, GpModel};
use crate::plant::{ControlAffinePlant, PlantError};
use crate::qp::{QpError, QpStatus};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Barrier(#[from] BarrierError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error("invalid simulation setup: {0}")]
    Invalid(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which controller drives the plant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerMode {
    /// Nominal tracking law, no filter.
    NominalOnly,
    /// Filter built on the known model only (`μ = 0`, `η = 0`).
    Ptsc,
    /// Filter with the GP mean and its error bound.
    Ptsgpc,
}

impl ControllerMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerMode::NominalOnly => "nominal_only",
            ControllerMode::Ptsc => "ptsc",
            ControllerMode::Ptsgpc => "ptsgpc",
        }
    }
}

impl std::str::FromStr for ControllerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "nominal_only" | "nominal" => Ok(ControllerMode::NominalOnly),
            "ptsc" => Ok(ControllerMode::Ptsc),
            "ptsgpc" => Ok(ControllerMode::Ptsgpc),
            other => Err(format!(
                "unknown controller mode `{other}` (expected nominal_only, ptsc or ptsgpc)"
            )),
        }
    }
}

/// Chain gains for one barrier: fixed, or selected at every window start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainSpec {
    Auto(AutoGains),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoGains {
    Auto,
}

impl GainSpec {
    pub fn auto() -> Self {
        GainSpec::Auto(AutoGains::Auto)
    }
}

#[derive(Debug)]
pub struct BarrierEntry {
    pub barrier: Box<dyn Barrier>,
    pub gains: GainSpec,
}

/// Timing and schedule of one closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSettings {
    pub t_end: f64,
    /// Integrator step.
    pub dt: f64,
    /// Controller update period; a multiple of `dt`.
    pub dt_ctrl: f64,
    pub windows: Vec<WindowParams>,
    /// Runs stop once the state leaves this box.
    pub domain_lower: Vec<f64>,
    pub domain_upper: Vec<f64>,
}

impl SimSettings {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Invalid(m.to_string()));
        if !(self.t_end > 0.0 && self.dt > 0.0 && self.dt_ctrl > 0.0) {
            return bad("t_end, dt and dt_ctrl must be positive");
        }
        if self.dt > self.dt_ctrl * (1.0 + 1e-12) {
            return bad("dt must not exceed dt_ctrl");
        }
        let ratio = self.dt_ctrl / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return bad("dt_ctrl must be an integer multiple of dt");
        }
        if self.windows.is_empty() {
            return bad("at least one prescribed-time window is required");
        }
        for w in &self.windows {
            w.validate()?;
            let k = w.t0 / self.dt_ctrl;
            if (k - k.round()).abs() > 1e-9 * k.abs().max(1.0) {
                return bad("window starts must fall on controller updates");
            }
        }
        if self.windows.windows(2).any(|p| p[1].t0 <= p[0].t0) {
            return bad("windows must be ordered by start time");
        }
        if self.domain_lower.len() != self.domain_upper.len() {
            return bad("domain bounds differ in length");
        }
        Ok(())
    }

    pub fn control_steps(&self) -> usize {
        (self.t_end / self.dt_ctrl).round() as usize
    }

    pub fn substeps(&self) -> usize {
        (self.dt_ctrl / self.dt).round() as usize
    }

    /// Index of the window in force at `t` (the latest one already started).
    pub fn window_index(&self, t: f64) -> Option<usize> {
        let eps = 1e-9 * self.dt_ctrl;
        self.windows.iter().rposition(|w| w.t0 <= t + eps)
    }
}

/// Source of `μ(x)` and `η(x)` for the filter.
pub trait UncertaintyModel: Send + Sync {
    fn estimate(&self, x: &[f64]) -> Result<UncertaintyEstimate, SimError>;
}

/// `μ = 0`, `η = 0`.
#[derive(Debug, Clone)]
pub struct NoUncertaintyModel {
    pub dim: usize,
}

impl UncertaintyModel for NoUncertaintyModel {
    fn estimate(&self, _x: &[f64]) -> Result<UncertaintyEstimate, SimError> {
        Ok(UncertaintyEstimate::zero(self.dim))
    }
}

/// Perfect knowledge: `μ = d`, `η = 0`.
pub struct ExactUncertainty<'a> {
    pub plant: &'a dyn ControlAffinePlant,
}

impl UncertaintyModel for ExactUncertainty<'_> {
    fn estimate(&self, x: &[f64]) -> Result<UncertaintyEstimate, SimError> {
        let mean = self.plant.uncertainty(x);
        let bound = nalgebra::DVector::zeros(mean.len());
        Ok(UncertaintyEstimate { mean, bound })
    }
}

/// GP posterior mean with the uniform error bound.
#[derive(Debug, Clone)]
pub struct GpUncertainty {
    pub model: GpModel,
    pub input_indices: Vec<usize>,
    pub evaluator: BoundEvaluator,
}

impl GpUncertainty {
    fn input(&self, x: &[f64]) -> Vec<f64> {
        self.input_indices.iter().map(|&i| x[i]).collect()
    }
}

impl UncertaintyModel for GpUncertainty {
    fn estimate(&self, x: &[f64]) -> Result<UncertaintyEstimate, SimError> {
        let p = self.model.predict(&self.input(x))?;
        Ok(UncertaintyEstimate {
            bound: self.evaluator.eta(&p.std),
            mean: p.mean,
        })
    }
}

/// One controller update.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub window: usize,
    pub x: Vec<f64>,
    pub u_nom: Vec<f64>,
    pub u_safe: Vec<f64>,
    /// `None` when no filter ran.
    pub qp_status: Option<QpStatus>,
    pub qp_slack: f64,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub phi: f64,
    pub mu: Vec<f64>,
    pub eta: Vec<f64>,
    pub d: Vec<f64>,
}

impl StepRecord {
    /// True uncertainty lies inside the `μ ± η` tube in every dimension.
    pub fn contained(&self) -> bool {
        self.d
            .iter()
            .zip(&self.mu)
            .zip(&self.eta)
            .all(|((d, m), e)| (d - m).abs() <= *e)
    }

    pub fn min_h1(&self) -> f64 {
        self.h1.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Gains in force during one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowLog {
    pub index: usize,
    pub t0: f64,
    /// `[c1, c2]` per barrier.
    pub gains: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub mode: ControllerMode,
    pub records: Vec<StepRecord>,
    pub windows: Vec<WindowLog>,
    /// Set when the run stopped early, with the reason.
    pub truncated: Option<String>,
}

impl SimTrace {
    pub fn relaxed_steps(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.qp_status == Some(QpStatus::InfeasibleRelaxed))
            .count()
    }

    pub fn containment_fraction(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| r.contained()).count() as f64 / self.records.len() as f64
    }

    /// Record closest to `t`, if one lies within half a controller period.
    pub fn record_at(&self, t: f64, dt_ctrl: f64) -> Option<&StepRecord> {
        self.records
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .filter(|r| (r.t - t).abs() <= 0.5 * dt_ctrl)
    }
}
