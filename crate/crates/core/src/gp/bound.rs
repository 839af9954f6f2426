//! Uniform high-probability prediction-error bound
//! `η_j(x) = √β σ_j(x) + γ_j`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{GpError, GpModel};

/// Closed-form `β_δ(τ) = 2 Σ_j log(0.5 √D w_j / (τ δ) + 1/δ)` over the
/// widths `w_j` of a `D`-dimensional domain box.
///
/// Unchecked beyond basic sanity: zero widths and `δ = 1` are accepted.
pub fn beta(widths: &[f64], delta: f64, tau: f64) -> Result<f64, GpError> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(GpError::InvalidBound(format!(
            "delta must lie in (0, 1], got {delta}"
        )));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(GpError::InvalidBound(format!(
            "tau must be positive, got {tau}"
        )));
    }
    if let Some(w) = widths.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(GpError::InvalidBound(format!("invalid domain width {w}")));
    }
    let root_d = (widths.len() as f64).sqrt();
    Ok(2.0
        * widths
            .iter()
            .map(|w| (0.5 * root_d * w / (tau * delta) + 1.0 / delta).ln())
            .sum::<f64>())
}

/// Confidence, grid constant, state-domain box and per-output Lipschitz
/// constants.
///
/// The domain box spans the full state (all `m·n` dimensions), not just the
/// GP input slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub delta: f64,
    pub tau: f64,
    pub domain_lower: Vec<f64>,
    pub domain_upper: Vec<f64>,
    pub lipschitz_d: Vec<f64>,
    pub lipschitz_mu: Vec<f64>,
    pub lipschitz_sigma: Vec<f64>,
}

impl BoundParams {
    pub fn validate(&self) -> Result<(), GpError> {
        let m = self.lipschitz_d.len();
        if m == 0 || self.lipschitz_mu.len() != m || self.lipschitz_sigma.len() != m {
            return Err(GpError::InvalidBound(
                "Lipschitz constants must be given for every output dimension".into(),
            ));
        }
        if !(self.delta > 0.0 && self.delta * (m as f64) < 1.0) {
            return Err(GpError::InvalidBound(format!(
                "delta must lie in (0, 1/m) with m={m}, got {}",
                self.delta
            )));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(GpError::InvalidBound(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if self.domain_lower.len() != self.domain_upper.len() || self.domain_lower.is_empty() {
            return Err(GpError::InvalidBound(
                "domain box bounds differ in length".into(),
            ));
        }
        for (j, (lo, hi)) in self.domain_lower.iter().zip(&self.domain_upper).enumerate() {
            if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
                return Err(GpError::InvalidBound(format!(
                    "degenerate domain along dimension {j}: [{lo}, {hi}]"
                )));
            }
        }
        let all = self
            .lipschitz_d
            .iter()
            .chain(&self.lipschitz_mu)
            .chain(&self.lipschitz_sigma);
        if all.clone().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(GpError::InvalidBound(
                "Lipschitz constants must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        self.lipschitz_d.len()
    }

    pub fn beta(&self) -> Result<f64, GpError> {
        self.validate()?;
        let widths: Vec<f64> = self
            .domain_upper
            .iter()
            .zip(&self.domain_lower)
            .map(|(h, l)| h - l)
            .collect();
        beta(&widths, self.delta, self.tau)
    }

    /// `γ_j = (L_d + √β L_σ + L_μ) τ` for every output.
    pub fn gamma(&self) -> Result<DVector<f64>, GpError> {
        let root_beta = self.beta()?.sqrt();
        Ok(DVector::from_iterator(
            self.output_dim(),
            (0..self.output_dim()).map(|j| {
                (self.lipschitz_d[j] + root_beta * self.lipschitz_sigma[j] + self.lipschitz_mu[j])
                    * self.tau
            }),
        ))
    }

    /// Precomputes `√β` and `γ` for repeated bound evaluations.
    pub fn evaluator(&self) -> Result<BoundEvaluator, GpError> {
        Ok(BoundEvaluator {
            root_beta: self.beta()?.sqrt(),
            gamma: self.gamma()?,
        })
    }

    /// `η(x)` from a fitted model.
    pub fn error_bound(&self, model: &GpModel, x: &[f64]) -> Result<DVector<f64>, GpError> {
        let eval = self.evaluator()?;
        let p = model.predict(x)?;
        Ok(eval.eta(&p.std))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundEvaluator {
    pub root_beta: f64,
    pub gamma: DVector<f64>,
}

impl BoundEvaluator {
    pub fn eta(&self, std: &DVector<f64>) -> DVector<f64> {
        std.map(|s| self.root_beta * s) + &self.gamma
    }
}
