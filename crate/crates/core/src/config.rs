//! Experiment configuration (TOML).
//!
//! A single file carries the plant, reference, nominal controller, GP
//! training and bound settings, barrier list, window schedule, simulation
//! timing and Monte Carlo randomization. Unknown keys are rejected.
//! `configs/manipulator.toml` is the reference instance.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barrier::{BallBarrier, GainPolicy, LinearBarrier, WindowParams};
use crate::gp::{BoundParams, KernelParams, LipschitzOptions};
use crate::plant::{CircularReference, GridSpec, ManipulatorParams, PdController, ReferenceSignal};
use crate::sim::{BarrierEntry, GainSpec, SimSettings};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid value for `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("{0}")]
    Serialize(#[from] toml::ser::Error),
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    /// State components used as GP inputs.
    pub input_indices: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub points_per_dim: usize,
    pub noise_std: Vec<f64>,
    /// Held-out evaluation lattice for the fit report.
    pub holdout_points_per_dim: usize,
}

impl TrainingConfig {
    pub fn grid(&self) -> GridSpec {
        GridSpec {
            input_indices: self.input_indices.clone(),
            lower: self.lower.clone(),
            upper: self.upper.clone(),
            points_per_dim: self.points_per_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    pub delta: f64,
    pub tau: f64,
    /// Full-state domain box.
    pub domain_lower: Vec<f64>,
    pub domain_upper: Vec<f64>,
    pub lipschitz_d: Vec<f64>,
    pub lipschitz_resolution: usize,
    pub lipschitz_inflation: f64,
}

impl BoundConfig {
    pub fn lipschitz_options(&self) -> LipschitzOptions {
        LipschitzOptions {
            resolution: self.lipschitz_resolution,
            inflation: self.lipschitz_inflation,
        }
    }

    /// Bound parameters once `L_μ` and `L_σ` are known.
    pub fn params(&self, lipschitz_mu: Vec<f64>, lipschitz_sigma: Vec<f64>) -> BoundParams {
        BoundParams {
            delta: self.delta,
            tau: self.tau,
            domain_lower: self.domain_lower.clone(),
            domain_upper: self.domain_upper.clone(),
            lipschitz_d: self.lipschitz_d.clone(),
            lipschitz_mu,
            lipschitz_sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BarrierConfig {
    /// `h = coefficientsᵀ q + offset`.
    Linear {
        coefficients: Vec<f64>,
        offset: f64,
        gains: GainSpec,
    },
    /// `h = radius² - ‖q - center‖²`.
    Ball {
        center: Vec<f64>,
        radius: f64,
        gains: GainSpec,
    },
}

impl BarrierConfig {
    pub fn build(&self) -> BarrierEntry {
        match self {
            BarrierConfig::Linear {
                coefficients,
                offset,
                gains,
            } => BarrierEntry {
                barrier: Box::new(LinearBarrier::new(coefficients.clone(), *offset)),
                gains: gains.clone(),
            },
            BarrierConfig::Ball {
                center,
                radius,
                gains,
            } => BarrierEntry {
                barrier: Box::new(BallBarrier {
                    center: center.clone(),
                    radius: *radius,
                }),
                gains: gains.clone(),
            },
        }
    }

    fn dim(&self) -> usize {
        match self {
            BarrierConfig::Linear { coefficients, .. } => coefficients.len(),
            BarrierConfig::Ball { center, .. } => center.len(),
        }
    }

    fn gains(&self) -> &GainSpec {
        match self {
            BarrierConfig::Linear { gains, .. } | BarrierConfig::Ball { gains, .. } => gains,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub t_end: f64,
    pub dt: f64,
    pub dt_ctrl: f64,
    /// Accepted barrier undershoot in the safety verdicts.
    pub safety_tolerance: f64,
    /// Defaults to the reference position at `t = 0` with zero velocity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_upper: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub runs: usize,
    /// Offsets `Δd_j` are drawn uniformly from `[-w_j, w_j]`.
    pub offset_half_width: Vec<f64>,
    /// Initial positions are drawn uniformly from `[q_d(0) - s, q_d(0)]`.
    pub initial_spread: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub plant: ManipulatorParams,
    pub reference: CircularReference,
    pub nominal: PdController,
    pub kernel: KernelParams,
    pub training: TrainingConfig,
    pub bound: BoundConfig,
    pub gains: GainPolicy,
    pub windows: Vec<WindowParams>,
    pub barriers: Vec<BarrierConfig>,
    pub sim: SimConfig,
    pub montecarlo: MonteCarloConfig,
}

impl ExperimentConfig {
    /// The two-link manipulator experiment with its default numerics.
    pub fn manipulator() -> Self {
        let two_pi = 2.0 * PI;
        let linear = |coefficients: [f64; 2], offset: f64| BarrierConfig::Linear {
            coefficients: coefficients.to_vec(),
            offset,
            gains: GainSpec::auto(),
        };
        Self {
            seed: 2024,
            plant: ManipulatorParams::default(),
            reference: CircularReference::default(),
            nominal: PdController {
                kp: vec![50.0, 50.0],
                kd: vec![25.0, 25.0],
            },
            kernel: KernelParams {
                signal_std: 1.0,
                lengthscale: 0.4,
            },
            training: TrainingConfig {
                input_indices: vec![0, 1],
                lower: vec![-two_pi; 2],
                upper: vec![two_pi; 2],
                points_per_dim: 30,
                noise_std: vec![0.1, 0.1],
                holdout_points_per_dim: 100,
            },
            bound: BoundConfig {
                delta: 0.01,
                tau: 1e-10,
                domain_lower: vec![-two_pi, -two_pi, -10.0, -10.0],
                domain_upper: vec![two_pi, two_pi, 10.0, 10.0],
                lipschitz_d: vec![34f64.sqrt(); 2],
                lipschitz_resolution: 30,
                lipschitz_inflation: 1.2,
            },
            gains: GainPolicy {
                margin: 0.1,
                fallback: 1.0,
                final_gain: 5.0,
                max_gain: Some(4.0),
            },
            windows: vec![
                WindowParams {
                    t0: 0.0,
                    horizon: 1.0,
                    alpha: 400.0,
                    clamp: 0.05,
                },
                WindowParams {
                    t0: 1.0,
                    horizon: 2.0,
                    alpha: 400.0,
                    clamp: 0.05,
                },
            ],
            barriers: vec![
                linear([1.0, 0.0], 0.0),
                linear([-1.0, 0.0], FRAC_PI_2),
                linear([1.0, 1.0], 0.0),
                linear([-1.0, -1.0], FRAC_PI_2),
            ],
            sim: SimConfig {
                t_end: 3.0,
                dt: 1e-4,
                dt_ctrl: 1e-4,
                safety_tolerance: 1e-3,
                initial_state: None,
                input_lower: None,
                input_upper: None,
            },
            montecarlo: MonteCarloConfig {
                runs: 100,
                offset_half_width: vec![15.0, 15.0],
                initial_spread: vec![1.0, 1.0],
            },
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn state_dim(&self) -> usize {
        4
    }

    pub fn input_dim(&self) -> usize {
        2
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.state_dim();
        let m = self.input_dim();
        self.plant
            .validate()
            .map_err(|e| invalid("plant", e.to_string()))?;
        if self.nominal.kp.len() != m || self.nominal.kd.len() != m {
            return Err(invalid("nominal", format!("kp and kd need {m} entries")));
        }
        self.kernel
            .validate()
            .map_err(|e| invalid("kernel", e.to_string()))?;

        let t = &self.training;
        self.training
            .grid()
            .validate()
            .map_err(|e| invalid("training", e.to_string()))?;
        if t.input_indices.iter().any(|&i| i >= n) {
            return Err(invalid(
                "training.input_indices",
                format!("indices must be below {n}"),
            ));
        }
        if t.noise_std.len() != m || t.noise_std.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(invalid(
                "training.noise_std",
                format!("need {m} finite non-negative values"),
            ));
        }
        if t.holdout_points_per_dim < 1 {
            return Err(invalid(
                "training.holdout_points_per_dim",
                "must be at least 1",
            ));
        }

        let b = &self.bound;
        if b.domain_lower.len() != n || b.domain_upper.len() != n {
            return Err(invalid(
                "bound.domain_lower",
                format!("domain box spans all {n} state dimensions"),
            ));
        }
        if b.lipschitz_d.len() != m {
            return Err(invalid("bound.lipschitz_d", format!("need {m} values")));
        }
        self.bound
            .params(vec![0.0; m], vec![0.0; m])
            .validate()
            .map_err(|e| invalid("bound", e.to_string()))?;
        if b.lipschitz_resolution < 2 {
            return Err(invalid("bound.lipschitz_resolution", "must be at least 2"));
        }
        if !(b.lipschitz_inflation >= 1.0) {
            return Err(invalid("bound.lipschitz_inflation", "must be at least 1"));
        }

        let g = &self.gains;
        if !(g.margin > 0.0 && g.fallback > 0.0 && g.final_gain > 0.0) {
            return Err(invalid(
                "gains",
                "margin, fallback and final_gain must be positive",
            ));
        }
        if g.max_gain.is_some_and(|c| !(c > 0.0)) {
            return Err(invalid("gains.max_gain", "must be positive"));
        }

        if self.barriers.is_empty() {
            return Err(invalid("barriers", "at least one barrier is required"));
        }
        for (i, bc) in self.barriers.iter().enumerate() {
            if bc.dim() != m {
                return Err(invalid(
                    &format!("barriers[{i}]"),
                    format!("barrier acts on {m} positions"),
                ));
            }
            if let GainSpec::Explicit(v) = bc.gains() {
                if v.len() != 2 || v.iter().any(|c| !(*c > 0.0)) {
                    return Err(invalid(
                        &format!("barriers[{i}].gains"),
                        "need two positive gains or \"auto\"",
                    ));
                }
            }
        }

        self.settings()
            .validate()
            .map_err(|e| invalid("sim/windows", e.to_string()))?;
        if !(self.sim.safety_tolerance >= 0.0) {
            return Err(invalid("sim.safety_tolerance", "must be non-negative"));
        }
        if let Some(x0) = &self.sim.initial_state {
            if x0.len() != n {
                return Err(invalid("sim.initial_state", format!("need {n} values")));
            }
        }
        match (&self.sim.input_lower, &self.sim.input_upper) {
            (None, None) => {}
            (Some(lo), Some(hi))
                if lo.len() == m && hi.len() == m && lo.iter().zip(hi).all(|(l, h)| l <= h) => {}
            _ => {
                return Err(invalid(
                    "sim.input_lower",
                    "input bounds need matching lower <= upper pairs",
                ))
            }
        }

        let mc = &self.montecarlo;
        if mc.runs < 1 {
            return Err(invalid("montecarlo.runs", "must be at least 1"));
        }
        if mc.offset_half_width.len() != m || mc.offset_half_width.iter().any(|w| !(*w >= 0.0)) {
            return Err(invalid(
                "montecarlo.offset_half_width",
                format!("need {m} non-negative values"),
            ));
        }
        if mc.initial_spread.len() != m || mc.initial_spread.iter().any(|w| !(*w >= 0.0)) {
            return Err(invalid(
                "montecarlo.initial_spread",
                format!("need {m} non-negative values"),
            ));
        }
        Ok(())
    }

    pub fn settings(&self) -> SimSettings {
        SimSettings {
            t_end: self.sim.t_end,
            dt: self.sim.dt,
            dt_ctrl: self.sim.dt_ctrl,
            windows: self.windows.clone(),
            domain_lower: self.truncation_box(&self.bound.domain_lower, f64::NEG_INFINITY),
            domain_upper: self.truncation_box(&self.bound.domain_upper, f64::INFINITY),
        }
    }

    /// Runs stop when a GP input leaves the bound's domain box; the other
    /// state components do not enter `μ` or `σ` and are left free.
    fn truncation_box(&self, bound: &[f64], free: f64) -> Vec<f64> {
        (0..bound.len())
            .map(|i| {
                if self.training.input_indices.contains(&i) {
                    bound[i]
                } else {
                    free
                }
            })
            .collect()
    }

    pub fn barrier_entries(&self) -> Vec<BarrierEntry> {
        self.barriers.iter().map(BarrierConfig::build).collect()
    }

    pub fn input_bounds(&self) -> Option<(nalgebra::DVector<f64>, nalgebra::DVector<f64>)> {
        match (&self.sim.input_lower, &self.sim.input_upper) {
            (Some(lo), Some(hi)) => Some((
                nalgebra::DVector::from_column_slice(lo),
                nalgebra::DVector::from_column_slice(hi),
            )),
            _ => None,
        }
    }

    /// `(q_d(0), 0)` unless overridden.
    pub fn initial_state(&self) -> Vec<f64> {
        self.sim.initial_state.clone().unwrap_or_else(|| {
            let q = self.reference.position(0.0);
            vec![q[0], q[1], 0.0, 0.0]
        })
    }

    /// Barrier values are evaluated on the position block.
    pub fn barrier_values(&self, x: &[f64]) -> Vec<f64> {
        self.barrier_entries()
            .iter()
            .map(|e| e.barrier.value(&x[..2]))
            .collect()
    }
}
