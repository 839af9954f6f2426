//! Learning-based prescribed-time safety control.
//!
//! A Gaussian-process model of the unknown dynamics, with a uniform error
//! bound, feeds a time-varying backstepping barrier chain whose gains blow up
//! towards a prescribed time. The resulting robust input constraints are
//! enforced by a minimally-invasive QP filter around a nominal controller.
//!
//! - [`gp`]: regression, error bound, Lipschitz estimates, model files
//! - [`barrier`]: blow-up function, barrier chain, gain selection, constraints
//! - [`qp`]: active-set filter and an enumeration oracle
//! - [`plant`]: control-affine plants, the two-link manipulator, training data
//! - [`sim`]: closed loop, safety verdicts, Monte Carlo, CSV output
//! - [`config`]: the TOML experiment description

pub mod barrier;
pub mod config;
pub mod gp;
pub mod plant;
pub mod qp;
pub mod sim;

pub use barrier::{BarrierError, LinearConstraint, UncertaintyEstimate, WindowParams};
pub use config::{ConfigError, ExperimentConfig};
pub use gp::{BoundParams, GpError, GpModel, KernelParams, TrainingSet};
pub use plant::{ControlAffinePlant, PlantError, TwoLinkManipulator};
pub use qp::{QpError, QpProblem, QpSolution, QpStatus};
pub use sim::{BatchReport, ControllerMode, RunReport, SimError, SimTrace};
