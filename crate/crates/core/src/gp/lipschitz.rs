//! Grid finite-difference estimates of the Lipschitz constants of the
//! posterior mean and standard deviation.

use serde::{Deserialize, Serialize};

use super::{GpError, GpModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzOptions {
    /// Grid points per input dimension (>= 2).
    pub resolution: usize,
    /// Multiplier applied to the raw grid estimate.
    pub inflation: f64,
}

impl Default for LipschitzOptions {
    fn default() -> Self {
        Self {
            resolution: 30,
            inflation: 1.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzEstimate {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Largest finite-difference slope of `μ_j` and `σ_j` over a uniform grid on
/// the box `[lower, upper]` (GP input coordinates).
///
/// At each grid node the forward differences along every axis form a
/// gradient estimate; the estimate is the largest norm found.
pub fn estimate_lipschitz(
    model: &GpModel,
    lower: &[f64],
    upper: &[f64],
    opts: LipschitzOptions,
) -> Result<LipschitzEstimate, GpError> {
    let d = model.input_dim();
    if lower.len() != d || upper.len() != d {
        return Err(GpError::DimensionMismatch {
            expected: d,
            got: lower.len().min(upper.len()),
        });
    }
    if opts.resolution < 2 {
        return Err(GpError::InvalidBound(
            "Lipschitz grid needs at least 2 points per dimension".into(),
        ));
    }
    let m = model.output_dim();
    let r = opts.resolution;
    let total = r.pow(d as u32);
    let step: Vec<f64> = (0..d)
        .map(|k| (upper[k] - lower[k]) / (r - 1) as f64)
        .collect();

    let mut means = vec![0.0; total * m];
    let mut stds = vec![0.0; total * m];
    let mut point = vec![0.0; d];
    for idx in 0..total {
        grid_point(idx, r, lower, &step, &mut point);
        let p = model.predict(&point)?;
        means[idx * m..(idx + 1) * m].copy_from_slice(p.mean.as_slice());
        stds[idx * m..(idx + 1) * m].copy_from_slice(p.std.as_slice());
    }

    let mut l_mean = vec![0.0f64; m];
    let mut l_std = vec![0.0f64; m];
    for idx in 0..total {
        for j in 0..m {
            let mut gm = 0.0;
            let mut gs = 0.0;
            let mut stride = 1;
            let mut rem = idx;
            for s in &step {
                let coord = rem % r;
                rem /= r;
                if coord + 1 < r && *s > 0.0 {
                    let next = idx + stride;
                    let dm = (means[next * m + j] - means[idx * m + j]) / s;
                    let ds = (stds[next * m + j] - stds[idx * m + j]) / s;
                    gm += dm * dm;
                    gs += ds * ds;
                }
                stride *= r;
            }
            l_mean[j] = l_mean[j].max(gm.sqrt());
            l_std[j] = l_std[j].max(gs.sqrt());
        }
    }

    Ok(LipschitzEstimate {
        mean: l_mean.iter().map(|v| v * opts.inflation).collect(),
        std: l_std.iter().map(|v| v * opts.inflation).collect(),
    })
}

fn grid_point(mut idx: usize, r: usize, lower: &[f64], step: &[f64], out: &mut [f64]) {
    for k in 0..lower.len() {
        out[k] = lower[k] + (idx % r) as f64 * step[k];
        idx /= r;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{KernelParams, TrainingSet};
    use nalgebra::DMatrix;

    const RAW: LipschitzOptions = LipschitzOptions {
        resolution: 2001,
        inflation: 1.0,
    };

    #[test]
    fn prior_mean_is_flat() {
        let model = GpModel::fit(
            &TrainingSet::empty(2, vec![0.1]),
            KernelParams::new(1.0, 0.5).unwrap(),
        )
        .unwrap();
        let est = estimate_lipschitz(
            &model,
            &[-1.0, -1.0],
            &[1.0, 1.0],
            LipschitzOptions::default(),
        )
        .unwrap();
        assert_eq!(est.mean, vec![0.0]);
        assert_eq!(est.std, vec![0.0]);
    }

    #[test]
    fn single_datum_matches_analytic_slope() {
        let (sf, l, so, y) = (1.3, 0.4, 0.1, 2.0);
        let t = TrainingSet::new(
            DMatrix::from_element(1, 1, 0.0),
            DMatrix::from_element(1, 1, y),
            vec![so],
        )
        .unwrap();
        let model = GpModel::fit(&t, KernelParams::new(sf, l).unwrap()).unwrap();
        // μ(x) = y σ_f² exp(-x²/2l²) / (σ_f² + σ_o²), steepest at |x| = l.
        let analytic = y.abs() * sf * sf / (l * std::f64::consts::E.sqrt()) / (sf * sf + so * so);
        let est = estimate_lipschitz(&model, &[-2.0], &[2.0], RAW).unwrap();
        assert!(
            (est.mean[0] - analytic).abs() / analytic < 0.05,
            "{} vs {analytic}",
            est.mean[0]
        );
    }

    #[test]
    fn refinement_is_stable() {
        let xs: Vec<f64> = (0..12).map(|i| -3.0 + 0.5 * i as f64).collect();
        let t = TrainingSet::new(
            DMatrix::from_column_slice(12, 1, &xs),
            DMatrix::from_fn(12, 1, |i, _| (2.0 * xs[i]).sin()),
            vec![0.05],
        )
        .unwrap();
        let model = GpModel::fit(&t, KernelParams::new(1.0, 0.6).unwrap()).unwrap();
        let mut prev = None;
        for r in [25, 50, 100, 200] {
            let est = estimate_lipschitz(
                &model,
                &[-3.0],
                &[3.0],
                LipschitzOptions {
                    resolution: r,
                    inflation: 1.0,
                },
            )
            .unwrap();
            if let Some(p) = prev {
                assert!(
                    est.mean[0] >= 0.9 * p,
                    "resolution {r}: {} < 0.9 * {p}",
                    est.mean[0]
                );
            }
            prev = Some(est.mean[0]);
        }
    }

    #[test]
    fn inflation_scales_estimate() {
        let t = TrainingSet::new(
            DMatrix::from_element(1, 1, 0.0),
            DMatrix::from_element(1, 1, 1.0),
            vec![0.1],
        )
        .unwrap();
        let model = GpModel::fit(&t, KernelParams::new(1.0, 0.4).unwrap()).unwrap();
        let o1 = LipschitzOptions {
            resolution: 50,
            inflation: 1.0,
        };
        let a = estimate_lipschitz(&model, &[-1.0], &[1.0], o1).unwrap();
        let b = estimate_lipschitz(
            &model,
            &[-1.0],
            &[1.0],
            LipschitzOptions {
                inflation: 1.2,
                ..o1
            },
        )
        .unwrap();
        assert!((b.mean[0] - 1.2 * a.mean[0]).abs() < 1e-12);
    }
}
