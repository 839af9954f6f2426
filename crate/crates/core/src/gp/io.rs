//! Versioned JSON model files, one per output dimension.
//!
//! A file stores the training data, hyperparameters and bound constants; the
//! Cholesky factor is recomputed on load. Floats are written in shortest
//! round-trip form and parsed with exact rounding, so save/load/save is
//! byte-identical and reloaded predictions are bit-identical.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{BoundParams, GpError, GpModel, KernelParams, TrainingSet};

pub const GP_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpFile {
    pub version: u32,
    pub output: usize,
    pub output_dim: usize,
    pub input_dim: usize,
    pub kernel: KernelParams,
    pub noise_std: f64,
    /// Row-major N x D.
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub bound: Option<BoundParams>,
}

impl GpFile {
    pub fn from_model(model: &GpModel, output: usize, bound: Option<&BoundParams>) -> Self {
        Self {
            version: GP_FILE_VERSION,
            output,
            output_dim: model.output_dim(),
            input_dim: model.input_dim(),
            kernel: model.kernel(output),
            noise_std: model.noise_std()[output],
            inputs: model
                .inputs()
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            targets: model.targets(output).iter().copied().collect(),
            bound: bound.cloned(),
        }
    }
}

pub fn file_name(output: usize) -> String {
    format!("gp_output_{output}.json")
}

/// Writes one file per output into `dir`, returning the paths in output order.
pub fn save_model(
    model: &GpModel,
    bound: Option<&BoundParams>,
    dir: &Path,
) -> Result<Vec<PathBuf>, GpError> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(model.output_dim());
    for j in 0..model.output_dim() {
        let file = GpFile::from_model(model, j, bound);
        let text =
            serde_json::to_string_pretty(&file).map_err(|e| GpError::Format(e.to_string()))?;
        let path = dir.join(file_name(j));
        fs::write(&path, text + "\n")?;
        paths.push(path);
    }
    Ok(paths)
}

/// Reads the per-output files written by [`save_model`] from `dir` and refits.
pub fn load_model(dir: &Path) -> Result<(GpModel, Option<BoundParams>), GpError> {
    let first = read_file(&dir.join(file_name(0)))?;
    let m = first.output_dim;
    let mut files = vec![first];
    for j in 1..m {
        files.push(read_file(&dir.join(file_name(j)))?);
    }
    from_files(&files)
}

fn read_file(path: &Path) -> Result<GpFile, GpError> {
    let text = fs::read_to_string(path)?;
    let file: GpFile = serde_json::from_str(&text)
        .map_err(|e| GpError::Format(format!("{}: {e}", path.display())))?;
    if file.version != GP_FILE_VERSION {
        return Err(GpError::Format(format!(
            "{}: unsupported version {} (expected {GP_FILE_VERSION})",
            path.display(),
            file.version
        )));
    }
    Ok(file)
}

pub fn from_files(files: &[GpFile]) -> Result<(GpModel, Option<BoundParams>), GpError> {
    let first = files
        .first()
        .ok_or_else(|| GpError::Format("no model files".into()))?;
    let n = first.inputs.len();
    let d = first.input_dim;
    for (j, f) in files.iter().enumerate() {
        if f.output != j || f.output_dim != files.len() {
            return Err(GpError::Format(format!(
                "file {j} declares output {}/{}",
                f.output, f.output_dim
            )));
        }
        if f.inputs != first.inputs || f.input_dim != d || f.targets.len() != n {
            return Err(GpError::Format(format!(
                "output {j} has inconsistent training data"
            )));
        }
        if f.inputs.iter().any(|r| r.len() != d) {
            return Err(GpError::Format("ragged input rows".into()));
        }
    }
    let flat: Vec<f64> = first.inputs.iter().flatten().copied().collect();
    let inputs = DMatrix::from_row_slice(n, d, &flat);
    let mut outputs = DMatrix::zeros(n, files.len());
    for (j, f) in files.iter().enumerate() {
        for (i, v) in f.targets.iter().enumerate() {
            outputs[(i, j)] = *v;
        }
    }
    let train = TrainingSet::new(inputs, outputs, files.iter().map(|f| f.noise_std).collect())?;
    let kernels: Vec<KernelParams> = files.iter().map(|f| f.kernel).collect();
    let model = GpModel::fit_per_output(&train, &kernels)?;
    Ok((model, first.bound.clone()))
}
