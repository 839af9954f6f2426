//! CSV schemas consumed by the plotting scripts.
//!
//! Trace (one row per controller update):
//!
//! ```text
//! t, x1..x{n}, u_nom1..u_nom{m}, u_safe1..u_safe{m},
//! h1_1..h1_{k}, h2_1..h2_{k}, phi, mu1..mu{m}, eta1..eta{m}, d1..d{m},
//! qp_status, qp_slack
//! ```
//!
//! `qp_status` is `optimal`, `infeasible_relaxed` or `unfiltered`.
//!
//! Batch summary (one row per run):
//!
//! ```text
//! run, mode, offset1..offset{m}, x0_1..x0_{n}, rescue, maintenance,
//! rescue_min_h1, maintenance_min_h1, min_h1_1..min_h1_{k}, worst_violation,
//! containment, relaxed_steps, truncated, error
//! ```
//!
//! Paired summary (compare command): `run`, then for each of the prefixes
//! `ptsc_` and `ptsgpc_` the columns `rescue, maintenance,
//! maintenance_min_h1, min_h1_1..min_h1_{k}, containment, error`.

use std::io::Write;

use super::{BatchReport, RunReport, SimError, SimTrace};

fn numbered(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (1..=count).map(move |i| format!("{prefix}{i}"))
}

pub fn trace_header(state_dim: usize, input_dim: usize, barriers: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(numbered("x", state_dim));
    h.extend(numbered("u_nom", input_dim));
    h.extend(numbered("u_safe", input_dim));
    h.extend(numbered("h1_", barriers));
    h.extend(numbered("h2_", barriers));
    h.push("phi".into());
    h.extend(numbered("mu", input_dim));
    h.extend(numbered("eta", input_dim));
    h.extend(numbered("d", input_dim));
    h.push("qp_status".into());
    h.push("qp_slack".into());
    h
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn write_trace_csv<W: Write>(trace: &SimTrace, out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = trace.records.first() else {
        w.flush()?;
        return Ok(());
    };
    w.write_record(trace_header(
        first.x.len(),
        first.u_nom.len(),
        first.h1.len(),
    ))?;
    for r in &trace.records {
        let mut row = vec![num(r.t)];
        for block in [&r.x, &r.u_nom, &r.u_safe, &r.h1, &r.h2] {
            row.extend(block.iter().copied().map(num));
        }
        row.push(num(r.phi));
        for block in [&r.mu, &r.eta, &r.d] {
            row.extend(block.iter().copied().map(num));
        }
        row.push(r.qp_status.map_or("unfiltered", |s| s.as_str()).to_string());
        row.push(num(r.qp_slack));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn batch_header(input_dim: usize, state_dim: usize, barriers: usize) -> Vec<String> {
    let mut h = vec!["run".to_string(), "mode".to_string()];
    h.extend(numbered("offset", input_dim));
    h.extend(numbered("x0_", state_dim));
    for s in [
        "rescue",
        "maintenance",
        "rescue_min_h1",
        "maintenance_min_h1",
    ] {
        h.push(s.into());
    }
    h.extend(numbered("min_h1_", barriers));
    for s in [
        "worst_violation",
        "containment",
        "relaxed_steps",
        "truncated",
        "error",
    ] {
        h.push(s.into());
    }
    h
}

fn batch_row(r: &RunReport, input_dim: usize, state_dim: usize, barriers: usize) -> Vec<String> {
    let pad = |v: &[f64], n: usize| {
        (0..n)
            .map(|i| v.get(i).copied().map_or(String::new(), num))
            .collect::<Vec<_>>()
    };
    let mut row = vec![r.run.to_string(), r.mode.as_str().to_string()];
    row.extend(pad(&r.offset, input_dim));
    row.extend(pad(&r.initial_state, state_dim));
    row.push(r.rescue.to_string());
    row.push(r.maintenance.to_string());
    row.push(num(r.rescue_min_h1));
    row.push(num(r.maintenance_min_h1));
    row.extend(pad(&r.maintenance_min_per_barrier, barriers));
    row.push(num(r.worst_violation));
    row.push(num(r.containment_fraction()));
    row.push(r.relaxed_steps.to_string());
    row.push(r.truncated.clone().unwrap_or_default());
    row.push(r.error.clone().unwrap_or_default());
    row
}

fn dims(batch: &BatchReport) -> (usize, usize, usize) {
    let pick = |f: fn(&RunReport) -> usize| batch.runs.iter().map(f).max().unwrap_or(0);
    (
        pick(|r| r.offset.len()),
        pick(|r| r.initial_state.len()),
        pick(|r| r.maintenance_min_per_barrier.len()),
    )
}

pub fn write_batch_csv<W: Write>(batch: &BatchReport, out: W) -> Result<(), SimError> {
    let (m, n, k) = dims(batch);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(batch_header(m, n, k))?;
    for r in &batch.runs {
        w.write_record(batch_row(r, m, n, k))?;
    }
    w.flush()?;
    Ok(())
}

pub fn paired_header(barriers: usize) -> Vec<String> {
    let mut h = vec!["run".to_string()];
    for mode in ["ptsc", "ptsgpc"] {
        h.push(format!("{mode}_rescue"));
        h.push(format!("{mode}_maintenance"));
        h.push(format!("{mode}_maintenance_min_h1"));
        h.extend(numbered(&format!("{mode}_min_h1_"), barriers).collect::<Vec<_>>());
        h.push(format!("{mode}_containment"));
        h.push(format!("{mode}_error"));
    }
    h
}

/// Side-by-side summary of two batches run on the same seeds.
pub fn write_paired_csv<W: Write>(
    ptsc: &BatchReport,
    ptsgpc: &BatchReport,
    out: W,
) -> Result<(), SimError> {
    if ptsc.runs.len() != ptsgpc.runs.len() {
        return Err(SimError::Invalid(
            "paired batches differ in run count".into(),
        ));
    }
    let k = dims(ptsc).2.max(dims(ptsgpc).2);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(paired_header(k))?;
    for (a, b) in ptsc.runs.iter().zip(&ptsgpc.runs) {
        let mut row = vec![a.run.to_string()];
        for r in [a, b] {
            row.push(r.rescue.to_string());
            row.push(r.maintenance.to_string());
            row.push(num(r.maintenance_min_h1));
            row.extend((0..k).map(|i| {
                r.maintenance_min_per_barrier
                    .get(i)
                    .copied()
                    .map_or(String::new(), num)
            }));
            row.push(num(r.containment_fraction()));
            row.push(r.error.clone().unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
