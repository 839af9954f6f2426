use nalgebra::DVector;

use super::{
    integrate::rk4_step, BarrierEntry, ControllerMode, GainSpec, SimError, SimSettings, SimTrace,
    StepRecord, UncertaintyModel, WindowLog,
};
use crate::barrier::{assemble_constraint, eval_chain, select_gains, GainPolicy, KnownDynamics};
use crate::plant::{ControlAffinePlant, PdController, ReferenceSignal};
use crate::qp::{self, QpProblem};

/// Everything one closed-loop run needs, borrowed from the caller.
pub struct ClosedLoop<'a> {
    pub plant: &'a dyn ControlAffinePlant,
    pub reference: &'a dyn ReferenceSignal,
    pub nominal: &'a PdController,
    pub barriers: &'a [BarrierEntry],
    pub uncertainty: &'a dyn UncertaintyModel,
    pub policy: GainPolicy,
    pub settings: &'a SimSettings,
    pub mode: ControllerMode,
    pub input_bounds: Option<(DVector<f64>, DVector<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub u_safe: DVector<f64>,
    pub record: StepRecord,
}

impl ClosedLoop<'_> {
    /// Chain gains for every barrier at the start of a window.
    pub fn window_gains(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, SimError> {
        self.barriers
            .iter()
            .map(|entry| match &entry.gains {
                GainSpec::Explicit(g) => {
                    if g.len() != 2 {
                        return Err(SimError::Invalid(format!(
                            "explicit gains need 2 entries, got {}",
                            g.len()
                        )));
                    }
                    Ok(g.clone())
                }
                GainSpec::Auto(_) => {
                    let m = entry.barrier.dim();
                    let (x1, x2) = x.split_at(m);
                    let h = entry.barrier.value(x1);
                    let h_dot = entry
                        .barrier
                        .gradient(x1)
                        .dot(&DVector::from_column_slice(x2));
                    Ok(select_gains(&[h], &[h_dot], &self.policy))
                }
            })
            .collect()
    }

    /// Filtered input at `(t, x)` for the given window and gains.
    pub fn step_controller(
        &self,
        t: f64,
        x: &[f64],
        window: usize,
        gains: &[Vec<f64>],
    ) -> Result<StepOutput, SimError> {
        let w = &self.settings.windows[window];
        let u_nom = self.nominal.nominal(t, x, self.reference);
        let estimate = self.uncertainty.estimate(x)?;
        let d = self.plant.uncertainty(x);
        let (drift, input_map) = self.plant.known_dynamics(x)?;
        let dynamics = KnownDynamics { drift, input_map };

        let mut h1 = Vec::with_capacity(self.barriers.len());
        let mut h2 = Vec::with_capacity(self.barriers.len());
        let mut rows = Vec::with_capacity(self.barriers.len());
        for (entry, g) in self.barriers.iter().zip(gains) {
            if self.mode == ControllerMode::NominalOnly {
                let chain = eval_chain(t, x, entry.barrier.as_ref(), g, w)?;
                h1.push(chain.h1);
                h2.push(chain.h2);
            } else {
                let (row, chain) =
                    assemble_constraint(t, x, entry.barrier.as_ref(), g, w, &dynamics, &estimate)?;
                h1.push(chain.h1);
                h2.push(chain.h2);
                rows.push(row);
            }
        }

        let (u_safe, qp_status, qp_slack) = if self.mode == ControllerMode::NominalOnly {
            (u_nom.clone(), None, 0.0)
        } else {
            let problem = QpProblem {
                nominal: u_nom.clone(),
                constraints: rows,
                bounds: self.input_bounds.clone(),
            };
            let sol = qp::solve(&problem)?;
            (sol.u, Some(sol.status), sol.slack)
        };

        let record = StepRecord {
            t,
            window,
            x: x.to_vec(),
            u_nom: u_nom.as_slice().to_vec(),
            u_safe: u_safe.as_slice().to_vec(),
            qp_status,
            qp_slack,
            h1,
            h2,
            phi: w.phi(t)?,
            mu: estimate.mean.as_slice().to_vec(),
            eta: estimate.bound.as_slice().to_vec(),
            d: d.as_slice().to_vec(),
        };
        Ok(StepOutput { u_safe, record })
    }

    /// Integrates from `x0` at `t = 0` to `t_end`.
    ///
    /// The last record is taken at `t_end` and its input is never applied.
    /// Leaving the domain box ends the run early with `truncated` set.
    pub fn run(&self, x0: &[f64]) -> Result<SimTrace, SimError> {
        self.settings.validate()?;
        let n = self.plant.state_dim();
        if x0.len() != n {
            return Err(SimError::Invalid(format!(
                "initial state has {} entries, expected {n}",
                x0.len()
            )));
        }
        let steps = self.settings.control_steps();
        let substeps = self.settings.substeps();
        let dt = self.settings.dt;
        let dt_ctrl = self.settings.dt_ctrl;

        let mut trace = SimTrace {
            mode: self.mode,
            records: Vec::with_capacity(steps + 1),
            windows: Vec::new(),
            truncated: None,
        };
        let mut x = DVector::from_column_slice(x0);
        let mut current: Option<usize> = None;
        let mut gains = Vec::new();

        for k in 0..=steps {
            let t = k as f64 * dt_ctrl;
            let window = self
                .settings
                .window_index(t)
                .ok_or_else(|| SimError::Invalid(format!("no window active at t = {t}")))?;
            if current != Some(window) {
                gains = self.window_gains(x.as_slice())?;
                trace.windows.push(WindowLog {
                    index: window,
                    t0: t,
                    gains: gains.clone(),
                });
                current = Some(window);
            }
            let out = self.step_controller(t, x.as_slice(), window, &gains)?;
            trace.records.push(out.record);
            if k == steps {
                break;
            }

            let u = out.u_safe;
            let mut rhs = |_t: f64, s: &DVector<f64>| self.plant.derivative(s.as_slice(), &u);
            for j in 0..substeps {
                x = rk4_step(&mut rhs, t + j as f64 * dt, &x, dt)?;
            }
            if let Some(reason) = self.outside_domain(x.as_slice()) {
                trace.truncated = Some(format!("t = {:.6}: {reason}", t + dt_ctrl));
                break;
            }
        }
        Ok(trace)
    }

    fn outside_domain(&self, x: &[f64]) -> Option<String> {
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Some(format!("state component {i} is not finite"));
        }
        let lo = &self.settings.domain_lower;
        let hi = &self.settings.domain_upper;
        (0..lo.len().min(x.len()))
            .find(|&i| x[i] < lo[i] || x[i] > hi[i])
            .map(|i| format!("state component {i} = {} left [{}, {}]", x[i], lo[i], hi[i]))
    }
}
