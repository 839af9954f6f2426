//! Single runs and the randomized batch study.
//!
//! Every run draws its randomness from three named ChaCha streams derived
//! from the master seed and the run index, so runs can be reproduced in
//! isolation and in any order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    evaluate_run, BatchReport, ClosedLoop, ControllerMode, GpUncertainty, NoUncertaintyModel,
    RunReport, SimError, SimTrace, UncertaintyModel,
};
use crate::config::ExperimentConfig;
use crate::gp::{estimate_lipschitz, BoundParams, GpModel};
use crate::plant::{
    generate_training_data, ControlAffinePlant, GridSpec, ReferenceSignal, TwoLinkManipulator,
};

/// Per-run random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunStreams {
    pub master_seed: u64,
    pub run: usize,
}

impl RunStreams {
    const DATA_NOISE: u64 = 0;
    const OFFSET: u64 = 1;
    const INITIAL_STATE: u64 = 2;

    pub fn new(master_seed: u64, run: usize) -> Self {
        Self { master_seed, run }
    }

    fn stream(&self, which: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.run as u64 * 3 + which);
        rng
    }

    pub fn data_noise(&self) -> ChaCha8Rng {
        self.stream(Self::DATA_NOISE)
    }

    pub fn offset(&self) -> ChaCha8Rng {
        self.stream(Self::OFFSET)
    }

    pub fn initial_state(&self) -> ChaCha8Rng {
        self.stream(Self::INITIAL_STATE)
    }
}

/// Uncertainty offset and initial state of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSetup {
    pub run: usize,
    pub streams: RunStreams,
    pub offset: [f64; 2],
    pub initial_state: Vec<f64>,
}

impl RunSetup {
    /// Offset and initial state as written in the config.
    pub fn nominal(config: &ExperimentConfig, master_seed: u64) -> Self {
        Self {
            run: 0,
            streams: RunStreams::new(master_seed, 0),
            offset: config.plant.uncertainty_offset,
            initial_state: config.initial_state(),
        }
    }

    /// `Δd_j ~ U[-w_j, w_j]`, `q_j(0) ~ U[q_{d,j}(0) - s_j, q_{d,j}(0)]`, zero
    /// initial velocity.
    pub fn randomized(config: &ExperimentConfig, master_seed: u64, run: usize) -> Self {
        let streams = RunStreams::new(master_seed, run);
        let mc = &config.montecarlo;
        let mut rng = streams.offset();
        let mut offset = [0.0; 2];
        for (j, o) in offset.iter_mut().enumerate() {
            let w = mc.offset_half_width[j];
            *o = config.plant.uncertainty_offset[j]
                + if w > 0.0 {
                    rng.random_range(-w..=w)
                } else {
                    0.0
                };
        }
        let mut rng = streams.initial_state();
        let qd = config.reference.position(0.0);
        let mut x0 = vec![0.0; config.state_dim()];
        for j in 0..2 {
            let s = mc.initial_spread[j];
            x0[j] = if s > 0.0 {
                rng.random_range(qd[j] - s..=qd[j])
            } else {
                qd[j]
            };
        }
        Self {
            run,
            streams,
            offset,
            initial_state: x0,
        }
    }

    pub fn plant(&self, config: &ExperimentConfig) -> Result<TwoLinkManipulator, SimError> {
        let mut params = config.plant.clone();
        params.uncertainty_offset = self.offset;
        Ok(TwoLinkManipulator::new(params)?)
    }
}

/// Fits the GP to noisy samples of the plant's uncertainty and attaches the
/// error bound with grid-estimated Lipschitz constants.
pub fn train_uncertainty_model(
    config: &ExperimentConfig,
    plant: &TwoLinkManipulator,
    streams: &RunStreams,
) -> Result<(GpUncertainty, BoundParams), SimError> {
    let grid = config.training.grid();
    let data = generate_training_data(
        plant,
        &grid,
        &config.training.noise_std,
        &mut streams.data_noise(),
    )?;
    let model = GpModel::fit(&data, config.kernel)?;
    uncertainty_from_model(config, model)
}

/// Error bound for an already fitted model.
pub fn uncertainty_from_model(
    config: &ExperimentConfig,
    model: GpModel,
) -> Result<(GpUncertainty, BoundParams), SimError> {
    let lip = estimate_lipschitz(
        &model,
        &config.training.lower,
        &config.training.upper,
        config.bound.lipschitz_options(),
    )?;
    let bound = config.bound.params(lip.mean, lip.std);
    let evaluator = bound.evaluator()?;
    Ok((
        GpUncertainty {
            model,
            input_indices: config.training.input_indices.clone(),
            evaluator,
        },
        bound,
    ))
}

/// Fit quality of a trained model against the plant's true uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub training_points: usize,
    pub holdout_points: usize,
    /// Per-output RMSE of the posterior mean on the held-out grid.
    pub rmse: Vec<f64>,
    /// Per-output RMS of `d` itself on the same grid.
    pub signal_rms: Vec<f64>,
    /// Per-output maximum posterior standard deviation on the grid.
    pub max_std: Vec<f64>,
}

/// Evaluates `model` on a `holdout_points_per_dim` grid over the training box.
pub fn fit_report(
    config: &ExperimentConfig,
    plant: &TwoLinkManipulator,
    model: &GpModel,
) -> Result<FitReport, SimError> {
    let grid = GridSpec {
        points_per_dim: config.training.holdout_points_per_dim,
        ..config.training.grid()
    };
    let points = grid.points();
    let m = model.output_dim();
    let mut sq_err = vec![0.0; m];
    let mut sq_sig = vec![0.0; m];
    let mut max_std = vec![0.0f64; m];
    for p in &points {
        let d = plant.uncertainty(&grid.embed(p, config.state_dim()));
        let pred = model.predict(p)?;
        for j in 0..m {
            sq_err[j] += (pred.mean[j] - d[j]).powi(2);
            sq_sig[j] += d[j] * d[j];
            max_std[j] = max_std[j].max(pred.std[j]);
        }
    }
    let n = points.len().max(1) as f64;
    Ok(FitReport {
        training_points: model.num_data(),
        holdout_points: points.len(),
        rmse: sq_err.iter().map(|s| (s / n).sqrt()).collect(),
        signal_rms: sq_sig.iter().map(|s| (s / n).sqrt()).collect(),
        max_std,
    })
}

/// One closed-loop run with an explicit uncertainty model.
pub fn simulate(
    config: &ExperimentConfig,
    mode: ControllerMode,
    plant: &TwoLinkManipulator,
    uncertainty: &dyn UncertaintyModel,
    x0: &[f64],
) -> Result<SimTrace, SimError> {
    let settings = config.settings();
    let barriers = config.barrier_entries();
    let cl = ClosedLoop {
        plant,
        reference: &config.reference,
        nominal: &config.nominal,
        barriers: &barriers,
        uncertainty,
        policy: config.gains,
        settings: &settings,
        mode,
        input_bounds: config.input_bounds(),
    };
    cl.run(x0)
}

/// One run: builds the plant, trains the GP when the mode needs it,
/// simulates and evaluates.
pub fn run_single(
    config: &ExperimentConfig,
    mode: ControllerMode,
    setup: &RunSetup,
) -> Result<(SimTrace, RunReport), SimError> {
    let plant = setup.plant(config)?;
    let trace = match mode {
        ControllerMode::Ptsgpc => {
            let (gp, _) = train_uncertainty_model(config, &plant, &setup.streams)?;
            simulate(config, mode, &plant, &gp, &setup.initial_state)?
        }
        _ => simulate(
            config,
            mode,
            &plant,
            &NoUncertaintyModel {
                dim: config.input_dim(),
            },
            &setup.initial_state,
        )?,
    };
    let report = evaluate_run(
        &trace,
        &config.settings(),
        config.sim.safety_tolerance,
        setup.run,
        setup.offset.to_vec(),
    );
    Ok((trace, report))
}

/// Randomized batch. Runs execute in parallel; a failing run is recorded in
/// its report and does not stop the batch. `sink` sees every finished trace.
pub fn run_monte_carlo<F>(
    config: &ExperimentConfig,
    mode: ControllerMode,
    runs: usize,
    master_seed: u64,
    sink: F,
) -> BatchReport
where
    F: Fn(&RunSetup, &SimTrace) -> Result<(), SimError> + Sync,
{
    let reports = (0..runs)
        .into_par_iter()
        .map(|run| {
            let setup = RunSetup::randomized(config, master_seed, run);
            let failed = |e: SimError| {
                RunReport::failed(
                    run,
                    mode,
                    setup.offset.to_vec(),
                    setup.initial_state.clone(),
                    e.to_string(),
                )
            };
            match run_single(config, mode, &setup) {
                Ok((trace, report)) => match sink(&setup, &trace) {
                    Ok(()) => report,
                    Err(e) => failed(e),
                },
                Err(e) => failed(e),
            }
        })
        .collect();
    BatchReport {
        mode,
        master_seed,
        runs: reports,
    }
}
