//! Zero-mean Gaussian-process regression, one independent GP per output
//! dimension, with the squared-exponential kernel.
//!
//! Output dimensions that share kernel hyperparameters and noise level also
//! share a single Cholesky factor, so a prediction costs one kernel vector and
//! one triangular solve per distinct factor.

mod bound;
mod io;
mod lipschitz;

pub use bound::{beta, BoundEvaluator, BoundParams};
pub use io::{file_name, load_model, save_model, GpFile, GP_FILE_VERSION};
pub use lipschitz::{estimate_lipschitz, LipschitzEstimate, LipschitzOptions};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GpError {
    #[error("invalid kernel parameters: signal_std={signal_std}, lengthscale={lengthscale}")]
    InvalidKernel { signal_std: f64, lengthscale: f64 },
    #[error("invalid training set: {0}")]
    InvalidTrainingSet(String),
    #[error(
        "Gram matrix of output {output} is not positive definite after jitter {max_jitter:e} \
         (N={n}, trace={trace:e}, min diagonal={min_diag:e})"
    )]
    NotPositiveDefinite {
        output: usize,
        n: usize,
        trace: f64,
        min_diag: f64,
        max_jitter: f64,
    },
    #[error("invalid bound parameters: {0}")]
    InvalidBound(String),
    #[error("query has dimension {got}, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file format: {0}")]
    Format(String),
}

/// Squared-exponential kernel `σ_f² exp(-‖x - x'‖² / (2 l²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub signal_std: f64,
    pub lengthscale: f64,
}

impl KernelParams {
    pub fn new(signal_std: f64, lengthscale: f64) -> Result<Self, GpError> {
        let k = Self {
            signal_std,
            lengthscale,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GpError> {
        let ok = self.signal_std.is_finite()
            && self.lengthscale.is_finite()
            && self.signal_std > 0.0
            && self.lengthscale > 0.0;
        if ok {
            Ok(())
        } else {
            Err(GpError::InvalidKernel {
                signal_std: self.signal_std,
                lengthscale: self.lengthscale,
            })
        }
    }

    #[inline]
    pub fn signal_var(&self) -> f64 {
        self.signal_std * self.signal_std
    }

    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        self.signal_var() * (-0.5 * sq / (self.lengthscale * self.lengthscale)).exp()
    }
}

/// Training pairs for all output dimensions.
///
/// `inputs` holds one row per datum (N x D); `outputs` is N x m.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub inputs: DMatrix<f64>,
    pub outputs: DMatrix<f64>,
    pub noise_std: Vec<f64>,
}

impl TrainingSet {
    pub fn new(
        inputs: DMatrix<f64>,
        outputs: DMatrix<f64>,
        noise_std: Vec<f64>,
    ) -> Result<Self, GpError> {
        let t = Self {
            inputs,
            outputs,
            noise_std,
        };
        t.validate()?;
        Ok(t)
    }

    /// Empty data set: the fitted model is the GP prior.
    pub fn empty(input_dim: usize, noise_std: Vec<f64>) -> Self {
        let m = noise_std.len();
        Self {
            inputs: DMatrix::zeros(0, input_dim),
            outputs: DMatrix::zeros(0, m),
            noise_std,
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.noise_std.len()
    }

    pub fn validate(&self) -> Result<(), GpError> {
        if self.noise_std.is_empty() {
            return Err(GpError::InvalidTrainingSet("no output dimensions".into()));
        }
        if self.outputs.nrows() != self.inputs.nrows() {
            return Err(GpError::InvalidTrainingSet(format!(
                "{} inputs but {} outputs",
                self.inputs.nrows(),
                self.outputs.nrows()
            )));
        }
        if self.outputs.ncols() != self.noise_std.len() {
            return Err(GpError::InvalidTrainingSet(format!(
                "outputs have {} columns, noise_std has {} entries",
                self.outputs.ncols(),
                self.noise_std.len()
            )));
        }
        if let Some(s) = self
            .noise_std
            .iter()
            .find(|s| !(s.is_finite() && **s > 0.0))
        {
            return Err(GpError::InvalidTrainingSet(format!(
                "noise std must be positive, got {s}"
            )));
        }
        if self
            .inputs
            .iter()
            .chain(self.outputs.iter())
            .any(|v| !v.is_finite())
        {
            return Err(GpError::InvalidTrainingSet(
                "non-finite value in data".into(),
            ));
        }
        Ok(())
    }
}

/// Cholesky factor of `K + σ_o² I` shared by outputs with identical
/// kernel and noise.
#[derive(Debug, Clone)]
struct Factor {
    kernel: KernelParams,
    noise_std: f64,
    jitter: f64,
    lower: DMatrix<f64>,
    /// Rows of `lower`, packed contiguously (row `i` has `i + 1` entries).
    packed: Vec<f64>,
}

impl Factor {
    fn new(kernel: KernelParams, noise_std: f64, jitter: f64, lower: DMatrix<f64>) -> Self {
        let n = lower.nrows();
        let mut packed = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            packed.extend((0..=i).map(|j| lower[(i, j)]));
        }
        Self {
            kernel,
            noise_std,
            jitter,
            lower,
            packed,
        }
    }

    /// `‖L⁻¹k‖²` by row-wise forward substitution.
    fn explained_variance(&self, k: &[f64], work: &mut Vec<f64>) -> f64 {
        work.clear();
        let mut offset = 0;
        let mut total = 0.0;
        for (i, &ki) in k.iter().enumerate() {
            let row = &self.packed[offset..offset + i + 1];
            let v = (ki - dot(&row[..i], work)) / row[i];
            work.push(v);
            total += v * v;
            offset += i + 1;
        }
        total
    }
}

/// Dot product with independent partial sums so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    acc.iter().sum::<f64>() + tail
}

#[derive(Debug, Clone)]
struct OutputGp {
    factor: usize,
    targets: DVector<f64>,
    /// `(K + σ_o² I)⁻¹ y`
    weights: DVector<f64>,
}

/// Posterior mean and standard deviation for every output dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mean: DVector<f64>,
    pub std: DVector<f64>,
}

/// Fitted GP; immutable after construction.
#[derive(Debug, Clone)]
pub struct GpModel {
    inputs: DMatrix<f64>,
    /// Row-major copy of `inputs`.
    rows: Vec<f64>,
    kernels: Vec<KernelParams>,
    noise_std: Vec<f64>,
    factors: Vec<Factor>,
    outputs: Vec<OutputGp>,
}

const JITTER_START: f64 = 1e-12;
const JITTER_MAX: f64 = 1e-6;

impl GpModel {
    /// Fit with one kernel shared by all output dimensions.
    pub fn fit(train: &TrainingSet, kernel: KernelParams) -> Result<Self, GpError> {
        Self::fit_per_output(train, &vec![kernel; train.output_dim()])
    }

    pub fn fit_per_output(train: &TrainingSet, kernels: &[KernelParams]) -> Result<Self, GpError> {
        train.validate()?;
        if kernels.len() != train.output_dim() {
            return Err(GpError::InvalidTrainingSet(format!(
                "{} kernels for {} outputs",
                kernels.len(),
                train.output_dim()
            )));
        }
        for k in kernels {
            k.validate()?;
        }

        let mut factors: Vec<Factor> = Vec::new();
        let mut outputs = Vec::with_capacity(kernels.len());
        for (j, (kernel, &noise_std)) in kernels.iter().zip(&train.noise_std).enumerate() {
            let idx = match factors
                .iter()
                .position(|f| f.kernel == *kernel && f.noise_std == noise_std)
            {
                Some(i) => i,
                None => {
                    factors.push(factorize(&train.inputs, *kernel, noise_std, j)?);
                    factors.len() - 1
                }
            };
            let targets = train.outputs.column(j).into_owned();
            let weights = solve_factor(&factors[idx].lower, &targets);
            outputs.push(OutputGp {
                factor: idx,
                targets,
                weights,
            });
        }

        let rows = train.inputs.transpose().as_slice().to_vec();
        Ok(Self {
            inputs: train.inputs.clone(),
            rows,
            kernels: kernels.to_vec(),
            noise_std: train.noise_std.clone(),
            factors,
            outputs,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.outputs.len()
    }

    pub fn num_data(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn kernel(&self, output: usize) -> KernelParams {
        self.kernels[output]
    }

    pub fn noise_std(&self) -> &[f64] {
        &self.noise_std
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    /// Training targets of one output, in data order.
    pub fn targets(&self, output: usize) -> &DVector<f64> {
        &self.outputs[output].targets
    }

    /// Diagonal jitter that was needed to factorize `output`'s Gram matrix.
    pub fn jitter(&self, output: usize) -> f64 {
        self.factors[self.outputs[output].factor].jitter
    }

    pub fn training_set(&self) -> TrainingSet {
        let mut outputs = DMatrix::zeros(self.num_data(), self.output_dim());
        for (j, o) in self.outputs.iter().enumerate() {
            outputs.set_column(j, &o.targets);
        }
        TrainingSet {
            inputs: self.inputs.clone(),
            outputs,
            noise_std: self.noise_std.clone(),
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), GpError> {
        if x.len() != self.input_dim() {
            return Err(GpError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn kernel_vector(&self, kernel: &KernelParams, x: &[f64]) -> Vec<f64> {
        let d = self.input_dim();
        if d == 0 {
            return vec![kernel.signal_var(); self.num_data()];
        }
        self.rows
            .chunks_exact(d)
            .map(|row| kernel.eval(row, x))
            .collect()
    }

    /// Posterior mean and standard deviation at `x`.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction, GpError> {
        self.check_dim(x)?;
        let m = self.output_dim();
        let mut mean = DVector::zeros(m);
        let mut std = DVector::zeros(m);
        let mut work = Vec::with_capacity(self.num_data());
        for (fi, factor) in self.factors.iter().enumerate() {
            let k = self.kernel_vector(&factor.kernel, x);
            let explained = factor.explained_variance(&k, &mut work);
            // round-off can push the difference slightly negative
            let var = (factor.kernel.signal_var() - explained).max(0.0);
            for (j, out) in self.outputs.iter().enumerate() {
                if out.factor == fi {
                    mean[j] = dot(&k, out.weights.as_slice());
                    std[j] = var.sqrt();
                }
            }
        }
        Ok(Prediction { mean, std })
    }

    /// Posterior mean only; skips the triangular solve.
    pub fn predict_mean(&self, x: &[f64]) -> Result<DVector<f64>, GpError> {
        self.check_dim(x)?;
        let mut mean = DVector::zeros(self.output_dim());
        for (fi, factor) in self.factors.iter().enumerate() {
            let k = self.kernel_vector(&factor.kernel, x);
            for (j, out) in self.outputs.iter().enumerate() {
                if out.factor == fi {
                    mean[j] = dot(&k, out.weights.as_slice());
                }
            }
        }
        Ok(mean)
    }

    /// Analytic gradient of the posterior mean of `output` at `x`.
    pub fn mean_gradient(&self, output: usize, x: &[f64]) -> Result<DVector<f64>, GpError> {
        self.check_dim(x)?;
        let out = &self.outputs[output];
        let kernel = self.kernels[output];
        let inv_l2 = 1.0 / (kernel.lengthscale * kernel.lengthscale);
        let mut grad = DVector::zeros(self.input_dim());
        for (row, w) in self.inputs.row_iter().zip(out.weights.iter()) {
            let xi = row.transpose();
            let k = kernel.eval(xi.as_slice(), x);
            for d in 0..x.len() {
                grad[d] -= w * k * (x[d] - xi[d]) * inv_l2;
            }
        }
        Ok(grad)
    }
}

fn gram(inputs: &DMatrix<f64>, kernel: KernelParams) -> DMatrix<f64> {
    let n = inputs.nrows();
    let rows: Vec<Vec<f64>> = inputs
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = kernel.signal_var();
        for j in 0..i {
            let v = kernel.eval(&rows[i], &rows[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

fn factorize(
    inputs: &DMatrix<f64>,
    kernel: KernelParams,
    noise_std: f64,
    output: usize,
) -> Result<Factor, GpError> {
    let n = inputs.nrows();
    let mut k = gram(inputs, kernel);
    for i in 0..n {
        k[(i, i)] += noise_std * noise_std;
    }
    if n == 0 {
        return Ok(Factor::new(kernel, noise_std, 0.0, k));
    }
    if let Some(ch) = k.clone().cholesky() {
        return Ok(Factor::new(kernel, noise_std, 0.0, ch.unpack()));
    }

    let trace = k.trace();
    let scale = trace / n as f64;
    let mut rel = JITTER_START;
    while rel <= JITTER_MAX * (1.0 + 1e-9) {
        let jitter = rel * scale;
        let mut kj = k.clone();
        for i in 0..n {
            kj[(i, i)] += jitter;
        }
        if let Some(ch) = kj.cholesky() {
            return Ok(Factor::new(kernel, noise_std, jitter, ch.unpack()));
        }
        rel *= 10.0;
    }
    Err(GpError::NotPositiveDefinite {
        output,
        n,
        trace,
        min_diag: k.diagonal().min(),
        max_jitter: JITTER_MAX * scale,
    })
}

fn solve_factor(lower: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    if rhs.is_empty() {
        return DVector::zeros(0);
    }
    let z = lower
        .solve_lower_triangular(rhs)
        .expect("Cholesky factor has a positive diagonal");
    lower
        .tr_solve_lower_triangular(&z)
        .expect("Cholesky factor has a positive diagonal")
}
