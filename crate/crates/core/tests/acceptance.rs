//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit status
//! when any criterion fails.
//!
//! The Monte-Carlo criteria run two 100-run batches and dominate the
//! runtime (minutes on a single core).

mod common;

use std::process::ExitCode;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use ptsf_core::sim::{
    exponential_bound_check, run_monte_carlo, run_single, ControllerMode, ExponentialBoundCheck,
    RunSetup, SimTrace,
};
use ptsf_core::ExperimentConfig;

const TOL: f64 = 1e-3;

struct Gate {
    failed: usize,
}

impl Gate {
    fn check(&mut self, name: &str, pass: bool, detail: String) {
        if !pass {
            self.failed += 1;
        }
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

#[derive(Default)]
struct BoundTally {
    windows: usize,
    h1_deficit: f64,
    h2_deficit: f64,
}

impl BoundTally {
    fn add(&mut self, c: ExponentialBoundCheck) {
        self.windows += c.windows_checked;
        self.h1_deficit = self.h1_deficit.max(c.h1_deficit);
        self.h2_deficit = self.h2_deficit.max(c.h2_deficit);
    }
}

fn non_spd_states(trace: &SimTrace) -> usize {
    let plant = common::manipulator();
    trace
        .records
        .iter()
        .filter(|r| {
            !plant
                .manipulator_fg(&r.x[..2], &r.x[2..])
                .is_ok_and(|(_, g)| common::is_spd(&g))
        })
        .count()
}

fn main() -> ExitCode {
    let mut gate = Gate { failed: 0 };
    let cfg = ExperimentConfig::manipulator();
    let settings = cfg.settings();

    let clock = Instant::now();
    let single = run_single(
        &cfg,
        ControllerMode::Ptsgpc,
        &RunSetup::nominal(&cfg, cfg.seed),
    );
    let single_time = clock.elapsed();
    let (trace, report) = match single {
        Ok(v) => v,
        Err(e) => {
            println!("FAIL single-run: {e}");
            return ExitCode::FAILURE;
        }
    };
    let window_end = cfg.windows[1].t0;
    let at_end = trace
        .record_at(window_end, cfg.sim.dt_ctrl)
        .map(|r| r.min_h1());
    gate.check(
        "rescue-from-unsafe",
        at_end.is_some_and(|h| h >= -TOL) && single_time < Duration::from_secs(30),
        format!(
            "initial min h1 {:.3}, min h1 at t={window_end} {:?}, runtime {:.1?}",
            trace.records[0].min_h1(),
            at_end,
            single_time
        ),
    );
    let late_min = trace
        .records
        .iter()
        .filter(|r| r.t >= window_end)
        .map(|r| r.min_h1())
        .fold(f64::INFINITY, f64::min);
    gate.check(
        "maintenance",
        late_min >= -TOL && report.maintenance && trace.truncated.is_none(),
        format!(
            "min h1 over t in [{window_end}, {}] = {late_min:.3e}",
            cfg.sim.t_end
        ),
    );

    let clock = Instant::now();
    let ptsc = run_monte_carlo(
        &cfg,
        ControllerMode::Ptsc,
        cfg.montecarlo.runs,
        cfg.seed,
        |_, _| Ok(()),
    );
    let tally = Mutex::new(BoundTally::default());
    let spd_failures = Mutex::new(0usize);
    let ptsgpc = run_monte_carlo(
        &cfg,
        ControllerMode::Ptsgpc,
        cfg.montecarlo.runs,
        cfg.seed,
        |_, t| {
            tally
                .lock()
                .unwrap()
                .add(exponential_bound_check(t, &settings));
            *spd_failures.lock().unwrap() += non_spd_states(t);
            Ok(())
        },
    );
    let mc_time = clock.elapsed();
    let (gp_rate, pc_rate) = (ptsgpc.maintenance_rate(), ptsc.maintenance_rate());
    let h4 = ptsc.violations_of(3, TOL);
    gate.check(
        "monte-carlo-rate",
        gp_rate >= 0.95
            && gp_rate > pc_rate
            && h4 >= 1
            && mc_time < Duration::from_secs(1800)
            && ptsgpc.failed_runs() == 0
            && ptsc.failed_runs() == 0,
        format!(
            "{} runs: PTSGPC maintenance {gp_rate:.2}, PTSC maintenance {pc_rate:.2}, PTSC h1_4 violations {h4}, \
             failed runs {}/{}, runtime {:.0?}",
            ptsgpc.runs.len(),
            ptsgpc.failed_runs(),
            ptsc.failed_runs(),
            mc_time
        ),
    );
    let contain = ptsgpc.containment_fraction();
    gate.check(
        "gp-bound-containment",
        contain >= 0.95,
        format!("fraction of visited PTSGPC states inside the tube {contain:.4}"),
    );

    let qp = common::qp_vs_oracle(10_000, 7);
    gate.check(
        "qp-oracle-equivalence",
        qp.status_disagreements == 0 && qp.worst_objective_gap <= 1e-7,
        format!(
            "{} instances ({} relaxed), status disagreements {}, worst relative objective gap {:.2e}",
            qp.instances, qp.infeasible, qp.status_disagreements, qp.worst_objective_gap
        ),
    );

    let gp_err = common::gp_vs_dense(100, 11);
    let analytic = common::gp_analytic_cases();
    gate.check(
        "gp-correctness",
        gp_err <= 1e-8 && analytic,
        format!("100 data sets, worst relative error {gp_err:.2e}; prior and single-datum cases exact: {analytic}"),
    );

    let calc = common::calculus_worst(1000, 5);
    gate.check(
        "calculus-checks",
        calc <= 1e-5,
        format!("1000 points, worst relative gap to central differences {calc:.2e}"),
    );

    let (one, increasing) = common::blowup_contract(500, 9);
    gate.check(
        "blow-up-contract",
        one && increasing,
        format!("phi(t0) == 1: {one}, strictly increasing before the clamp: {increasing}"),
    );

    let mut bound = tally.into_inner().unwrap();
    bound.add(exponential_bound_check(&trace, &settings));
    gate.check(
        "exponential-bound",
        bound.windows > 0 && bound.h1_deficit <= TOL && bound.h2_deficit <= TOL,
        format!(
            "{} certified windows, worst h1 deficit {:.2e}, worst h2 deficit {:.2e}",
            bound.windows, bound.h1_deficit, bound.h2_deficit
        ),
    );

    let skew = common::worst_skew_residual(1000, 2);
    let spd = spd_failures.into_inner().unwrap() + non_spd_states(&trace);
    gate.check(
        "manipulator-structure",
        skew < 1e-6 && spd == 0,
        format!("skew residual {skew:.2e} over 1000 states, non-SPD g at {spd} visited states"),
    );

    let order = common::observed_order();
    gate.check(
        "integrator-order",
        order >= 3.8,
        format!("observed order {order:.3} under step halving"),
    );

    println!("{} criteria failed", gate.failed);
    if gate.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
