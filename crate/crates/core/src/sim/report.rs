//! Safety verdicts for a finished run.
//!
//! Rescue: every barrier is non-negative when the first window ends.
//! Maintenance: every barrier stays non-negative throughout the last window.
//! Both accept values down to `-tolerance`.

use serde::{Deserialize, Serialize};

use super::{ControllerMode, SimSettings, SimTrace, StepRecord};

/// Verdict for one window: safe starts are judged over the whole window,
/// unsafe starts at its end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowVerdict {
    pub index: usize,
    pub t0: f64,
    /// Last time covered by this window in the trace.
    pub t_last: f64,
    pub safe_start: bool,
    /// Smallest barrier value inside the window (safe start) or at its end
    /// (unsafe start).
    pub min_h1: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run: usize,
    pub mode: ControllerMode,
    pub offset: Vec<f64>,
    pub initial_state: Vec<f64>,
    pub rescue: bool,
    /// `min_i h1_i` at the end of the first window.
    pub rescue_min_h1: f64,
    pub maintenance: bool,
    /// `min_{i, t} h1_i` over the last window.
    pub maintenance_min_h1: f64,
    /// Per-barrier minimum over the last window.
    pub maintenance_min_per_barrier: Vec<f64>,
    /// `max(0, -maintenance_min_h1)`.
    pub worst_violation: f64,
    pub contained_steps: usize,
    pub total_steps: usize,
    pub relaxed_steps: usize,
    pub windows: Vec<WindowVerdict>,
    pub truncated: Option<String>,
    /// Set when the run aborted; all verdicts are then false.
    pub error: Option<String>,
}

impl RunReport {
    pub fn containment_fraction(&self) -> f64 {
        if self.total_steps == 0 {
            0.0
        } else {
            self.contained_steps as f64 / self.total_steps as f64
        }
    }

    /// Report for a run that produced no trace.
    pub fn failed(
        run: usize,
        mode: ControllerMode,
        offset: Vec<f64>,
        initial_state: Vec<f64>,
        error: String,
    ) -> Self {
        Self {
            run,
            mode,
            offset,
            initial_state,
            rescue: false,
            rescue_min_h1: f64::NAN,
            maintenance: false,
            maintenance_min_h1: f64::NAN,
            maintenance_min_per_barrier: Vec::new(),
            worst_violation: f64::NAN,
            contained_steps: 0,
            total_steps: 0,
            relaxed_steps: 0,
            windows: Vec::new(),
            truncated: None,
            error: Some(error),
        }
    }
}

fn window_records(trace: &SimTrace, window: usize) -> impl Iterator<Item = &StepRecord> {
    trace.records.iter().filter(move |r| r.window == window)
}

fn min_h1<'t>(records: impl Iterator<Item = &'t StepRecord>) -> f64 {
    records
        .map(StepRecord::min_h1)
        .fold(f64::INFINITY, f64::min)
}

/// Verdicts for a finished trace.
pub fn evaluate_run(
    trace: &SimTrace,
    settings: &SimSettings,
    tolerance: f64,
    run: usize,
    offset: Vec<f64>,
) -> RunReport {
    let initial_state = trace
        .records
        .first()
        .map(|r| r.x.clone())
        .unwrap_or_default();
    let complete = trace.truncated.is_none();

    let mut windows = Vec::new();
    for (index, w) in settings.windows.iter().enumerate() {
        let records: Vec<&StepRecord> = window_records(trace, index).collect();
        let (Some(first), Some(last)) = (records.first(), records.last()) else {
            continue;
        };
        // the record opening the next window closes this one
        let closing = trace
            .records
            .iter()
            .find(|r| r.window > index)
            .or(records.last().copied())
            .expect("non-empty");
        let safe_start = first.min_h1() >= 0.0;
        let reached_end = closing.t >= w.end().min(settings.t_end) - 0.5 * settings.dt_ctrl;
        let (value, success) = if safe_start {
            let m = min_h1(records.iter().copied()).min(closing.min_h1());
            (m, m >= -tolerance && reached_end)
        } else {
            let m = closing.min_h1();
            (m, m >= -tolerance && reached_end)
        };
        windows.push(WindowVerdict {
            index,
            t0: w.t0,
            t_last: last.t,
            safe_start,
            min_h1: value,
            success,
        });
    }

    let first_end = settings.windows[0].end().min(settings.t_end);
    let rescue_min_h1 = trace
        .record_at(first_end, settings.dt_ctrl)
        .map(StepRecord::min_h1)
        .unwrap_or(f64::NAN);
    let rescue = rescue_min_h1 >= -tolerance;

    let last = settings.windows.len() - 1;
    let nb = trace.records.first().map(|r| r.h1.len()).unwrap_or(0);
    let mut per_barrier = vec![f64::INFINITY; nb];
    for r in window_records(trace, last) {
        for (m, h) in per_barrier.iter_mut().zip(&r.h1) {
            *m = m.min(*h);
        }
    }
    let maintenance_min_h1 = per_barrier.iter().copied().fold(f64::INFINITY, f64::min);
    let maintenance =
        complete && maintenance_min_h1.is_finite() && maintenance_min_h1 >= -tolerance;

    RunReport {
        run,
        mode: trace.mode,
        offset,
        initial_state,
        rescue: rescue && complete,
        rescue_min_h1,
        maintenance,
        maintenance_min_h1,
        maintenance_min_per_barrier: per_barrier,
        worst_violation: (-maintenance_min_h1).max(0.0),
        contained_steps: trace.records.iter().filter(|r| r.contained()).count(),
        total_steps: trace.records.len(),
        relaxed_steps: trace.relaxed_steps(),
        windows,
        truncated: trace.truncated.clone(),
        error: None,
    }
}

/// Aggregate over a Monte Carlo batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub mode: ControllerMode,
    pub master_seed: u64,
    pub runs: Vec<RunReport>,
}

impl BatchReport {
    fn rate(&self, pick: impl Fn(&RunReport) -> bool) -> f64 {
        if self.runs.is_empty() {
            return 0.0;
        }
        self.runs.iter().filter(|r| pick(r)).count() as f64 / self.runs.len() as f64
    }

    pub fn rescue_rate(&self) -> f64 {
        self.rate(|r| r.rescue)
    }

    pub fn maintenance_rate(&self) -> f64 {
        self.rate(|r| r.maintenance)
    }

    /// Fraction of all visited states, pooled over runs, inside the GP tube.
    pub fn containment_fraction(&self) -> f64 {
        let total: usize = self.runs.iter().map(|r| r.total_steps).sum();
        if total == 0 {
            return 0.0;
        }
        self.runs.iter().map(|r| r.contained_steps).sum::<usize>() as f64 / total as f64
    }

    pub fn failed_runs(&self) -> usize {
        self.runs.iter().filter(|r| r.error.is_some()).count()
    }

    /// Runs in which barrier `i` went below `-tolerance` in the last window.
    pub fn violations_of(&self, barrier: usize, tolerance: f64) -> usize {
        self.runs
            .iter()
            .filter(|r| {
                r.maintenance_min_per_barrier
                    .get(barrier)
                    .is_some_and(|m| *m < -tolerance)
            })
            .count()
    }
}

/// Largest amounts by which a trace falls below the exponential lower bounds
///
/// ```text
/// h2(t) >= h2(t0) e^{-c2 Φ(t)}
/// h1(t) >= h1(t0) e^{-c1 Φ(t)} + h2(t0) ∫ e^{-c1 (Φ(t) - Φ(s)) - c2 Φ(s)} ds
/// ```
///
/// with `Φ(t) = ∫_{t0}^t φ`, checked per window and barrier. Only windows in
/// which every step solved the filter exactly and kept `d` inside the GP
/// tube are included.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ExponentialBoundCheck {
    pub windows_checked: usize,
    pub h2_deficit: f64,
    pub h1_deficit: f64,
}

pub fn exponential_bound_check(trace: &SimTrace, settings: &SimSettings) -> ExponentialBoundCheck {
    let mut out = ExponentialBoundCheck::default();
    for log in &trace.windows {
        let w = &settings.windows[log.index];
        let records: Vec<&StepRecord> = window_records(trace, log.index).collect();
        let certified = records
            .iter()
            .all(|r| r.qp_status == Some(crate::qp::QpStatus::Optimal) && r.contained());
        if records.is_empty() || !certified {
            continue;
        }
        out.windows_checked += 1;
        for (i, gains) in log.gains.iter().enumerate() {
            let (c1, c2) = (gains[0], gains[1]);
            let h1_0 = records[0].h1[i];
            let h2_0 = records[0].h2[i];
            // running value of ∫ e^{-c1 (Φ(t) - Φ(s)) - c2 Φ(s)} ds (trapezoid)
            let mut integral = 0.0;
            let mut prev: Option<(f64, f64)> = None;
            for r in &records {
                let Ok(big_phi) = w.phi_integral(r.t) else {
                    continue;
                };
                if let Some((t_prev, phi_prev)) = prev {
                    let dt = r.t - t_prev;
                    let decay = (-c1 * (big_phi - phi_prev)).exp();
                    integral = decay * (integral + 0.5 * dt * (-c2 * phi_prev).exp())
                        + 0.5 * dt * (-c2 * big_phi).exp();
                }
                prev = Some((r.t, big_phi));
                let h2_bound = h2_0 * (-c2 * big_phi).exp();
                let h1_bound = h1_0 * (-c1 * big_phi).exp() + h2_0 * integral;
                out.h2_deficit = out.h2_deficit.max(h2_bound - r.h2[i]);
                out.h1_deficit = out.h1_deficit.max(h1_bound - r.h1[i]);
            }
        }
    }
    out
}
