//! Independent reference computations shared by the property tests and the
//! acceptance target.

#![allow(dead_code)]

use std::convert::Infallible;

use nalgebra::{DMatrix, DVector, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ptsf_core::barrier::{
    eval_chain, BallBarrier, Barrier, LinearBarrier, LinearConstraint, WindowParams,
};
use ptsf_core::plant::{ManipulatorParams, TwoLinkManipulator};
use ptsf_core::qp::{solve, solve_oracle, QpProblem};
use ptsf_core::sim::rk4_integrate;
use ptsf_core::{GpModel, KernelParams, QpStatus, TrainingSet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn se(a: &[f64], b: &[f64], sf: f64, l: f64) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    sf * sf * (-sq / (2.0 * l * l)).exp()
}

/// Posterior mean and variance from an LU solve of the full system.
pub fn dense_posterior(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    sf: f64,
    l: f64,
    noise: f64,
    query: &[f64],
) -> (f64, f64) {
    let n = x.nrows();
    let row = |i: usize| x.row(i).iter().copied().collect::<Vec<_>>();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            k[(i, j)] = se(&row(i), &row(j), sf, l);
        }
        k[(i, i)] += noise * noise;
    }
    let ks = DVector::from_iterator(n, (0..n).map(|i| se(&row(i), query, sf, l)));
    let lu = k.full_piv_lu();
    let alpha = lu.solve(y).unwrap();
    let v = lu.solve(&ks).unwrap();
    (ks.dot(&alpha), sf * sf - ks.dot(&v))
}

/// Worst relative error of mean and variance against [`dense_posterior`]
/// over random data sets with `N <= 50`.
pub fn gp_vs_dense(datasets: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..datasets {
        let n = r.random_range(1..=50);
        let d = r.random_range(1..=3);
        let sf = r.random_range(0.5..2.0);
        let l = r.random_range(0.3..1.5);
        let noise = r.random_range(0.05..0.5);
        let x = DMatrix::from_fn(n, d, |_, _| r.random_range(-2.0..2.0));
        let y = DMatrix::from_fn(n, 1, |_, _| r.random_range(-3.0..3.0));
        let data = TrainingSet::new(x.clone(), y.clone(), vec![noise]).unwrap();
        let model = GpModel::fit(&data, KernelParams::new(sf, l).unwrap()).unwrap();
        let yv = y.column(0).into_owned();
        for _ in 0..5 {
            let q: Vec<f64> = (0..d).map(|_| r.random_range(-2.5..2.5)).collect();
            let (mean, var) = dense_posterior(&x, &yv, sf, l, noise, &q);
            let p = model.predict(&q).unwrap();
            let y_scale = yv.amax().max(1.0);
            worst = worst.max((p.mean[0] - mean).abs() / mean.abs().max(y_scale));
            worst = worst.max((p.std[0].powi(2) - var).abs() / var.abs().max(sf * sf));
        }
    }
    worst
}

/// N = 0 returns the prior exactly; one datum matches the scalar closed form.
pub fn gp_analytic_cases() -> bool {
    let prior = GpModel::fit(
        &TrainingSet::empty(2, vec![0.1]),
        KernelParams::new(1.5, 0.7).unwrap(),
    )
    .unwrap();
    let p = prior.predict(&[0.3, -1.0]).unwrap();
    let prior_ok = p.mean[0] == 0.0 && p.std[0] == 1.5;

    let (sf, l, noise, x0, y0, q) = (1.2, 0.8, 0.3, 0.4, 2.0, 1.1);
    let data = TrainingSet::new(
        DMatrix::from_element(1, 1, x0),
        DMatrix::from_element(1, 1, y0),
        vec![noise],
    )
    .unwrap();
    let model = GpModel::fit(&data, KernelParams::new(sf, l).unwrap()).unwrap();
    let k = sf * sf * (-(q - x0) * (q - x0) / (2.0 * l * l)).exp();
    let denom = sf * sf + noise * noise;
    let p = model.predict(&[q]).unwrap();
    let single_ok = (p.mean[0] - k * y0 / denom).abs() <= 1e-14
        && (p.std[0].powi(2) - (sf * sf - k * k / denom)).abs() <= 1e-14;
    prior_ok && single_ok
}

pub fn random_qp<R: Rng>(r: &mut R) -> QpProblem {
    let rows = r.random_range(0..=6);
    let nominal = DVector::from_fn(2, |_, _| r.random_range(-5.0..5.0));
    let constraints = (0..rows)
        .map(|_| {
            let angle: f64 = r.random_range(0.0..std::f64::consts::TAU);
            let scale = r.random_range(0.2..3.0);
            LinearConstraint {
                a: DVector::from_vec(vec![scale * angle.cos(), scale * angle.sin()]),
                b: r.random_range(-4.0..4.0),
            }
        })
        .collect();
    QpProblem::new(nominal, constraints)
}

#[derive(Debug, Default)]
pub struct QpAgreement {
    pub instances: usize,
    pub infeasible: usize,
    /// `|f_a - f_b| / max(1, |f_b|)`; far-out vertices of nearly parallel
    /// rows carry objectives near 1e8.
    pub worst_objective_gap: f64,
    pub status_disagreements: usize,
}

pub fn qp_vs_oracle(instances: usize, seed: u64) -> QpAgreement {
    let mut r = rng(seed);
    let mut out = QpAgreement {
        instances,
        ..Default::default()
    };
    for _ in 0..instances {
        let p = random_qp(&mut r);
        let a = solve(&p).unwrap();
        let b = solve_oracle(&p).unwrap();
        if a.status != b.status {
            out.status_disagreements += 1;
            continue;
        }
        if a.status == QpStatus::InfeasibleRelaxed {
            out.infeasible += 1;
        }
        let reference = b.objective(&p.nominal);
        let gap = (a.objective(&p.nominal) - reference).abs() / reference.abs().max(1.0);
        out.worst_objective_gap = out.worst_objective_gap.max(gap);
    }
    out
}

fn rel(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}

fn random_window<R: Rng>(r: &mut R) -> WindowParams {
    WindowParams::new(
        r.random_range(0.0..2.0),
        r.random_range(0.5..3.0),
        r.random_range(0.0..1000.0),
        0.05,
    )
    .unwrap()
}

/// Worst relative gap between `phi_dot`, every partial of the second chain
/// function and the GP mean gradient and their central differences.
pub fn calculus_worst(points: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let x = DMatrix::from_fn(40, 2, |_, _| r.random_range(-2.0..2.0));
    let y = DMatrix::from_fn(40, 2, |_, _| r.random_range(-3.0..3.0));
    let gp = GpModel::fit(
        &TrainingSet::new(x, y, vec![0.1, 0.2]).unwrap(),
        KernelParams::new(1.0, 0.6).unwrap(),
    )
    .unwrap();

    let mut worst = 0.0f64;
    for _ in 0..points {
        let w = random_window(&mut r);
        // stay clear of the clamp kink so the stencil sees a smooth function
        let t = w.t0 + r.random_range(0.01..0.9) * w.clamp_elapsed();
        let ht = 1e-6 * w.horizon;
        let fd = (w.phi(t + ht).unwrap() - w.phi(t - ht).unwrap()) / (2.0 * ht);
        worst = worst.max(rel(w.phi_dot(t).unwrap(), fd));

        let state: Vec<f64> = (0..4).map(|_| r.random_range(-2.0..2.0)).collect();
        let gains = [r.random_range(0.1..5.0), r.random_range(0.1..5.0)];
        let barriers: [Box<dyn Barrier>; 2] = [
            Box::new(LinearBarrier::new(
                vec![r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)],
                0.3,
            )),
            Box::new(BallBarrier {
                center: vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)],
                radius: 2.0,
            }),
        ];
        for b in &barriers {
            let c = eval_chain(t, &state, b.as_ref(), &gains, &w).unwrap();
            let h2 = |t: f64, s: &[f64]| eval_chain(t, s, b.as_ref(), &gains, &w).unwrap().h2;
            let fd_t = (h2(t + ht, &state) - h2(t - ht, &state)) / (2.0 * ht);
            worst = worst.max(rel(c.dh2_dt, fd_t));
            for k in 0..4 {
                let hx = 1e-6;
                let mut p = state.clone();
                let mut m = state.clone();
                p[k] += hx;
                m[k] -= hx;
                let fd_x = (h2(t, &p) - h2(t, &m)) / (2.0 * hx);
                let analytic = if k < 2 {
                    c.dh2_dx1[k]
                } else {
                    c.dh2_dx2[k - 2]
                };
                worst = worst.max(rel(analytic, fd_x));
            }
        }

        let q = [r.random_range(-2.5..2.5), r.random_range(-2.5..2.5)];
        for out in 0..2 {
            let g = gp.mean_gradient(out, &q).unwrap();
            for k in 0..2 {
                let h = 1e-6;
                let mut p = q;
                let mut m = q;
                p[k] += h;
                m[k] -= h;
                let fd = (gp.predict_mean(&p).unwrap()[out] - gp.predict_mean(&m).unwrap()[out])
                    / (2.0 * h);
                worst = worst.max(rel(g[k], fd));
            }
        }
    }
    worst
}

/// `φ(t0) = 1` exactly and strict growth over the unclamped part, across
/// random windows with `α ∈ [0, 10³]`.
pub fn blowup_contract(windows: usize, seed: u64) -> (bool, bool) {
    let mut r = rng(seed);
    let mut starts_at_one = true;
    let mut increasing = true;
    for _ in 0..windows {
        let w = WindowParams::new(
            r.random_range(-5.0..5.0),
            r.random_range(0.01..10.0),
            r.random_range(0.0..=1000.0),
            r.random_range(1e-3..0.5),
        )
        .unwrap();
        starts_at_one &= w.phi(w.t0).unwrap() == 1.0;
        let steps = 1000;
        let mut prev = w.phi(w.t0).unwrap();
        for i in 1..=steps {
            let t = w.t0 + w.clamp_elapsed() * i as f64 / steps as f64;
            let v = w.phi(t).unwrap();
            increasing &= v > prev;
            prev = v;
        }
    }
    (starts_at_one, increasing)
}

pub fn manipulator() -> TwoLinkManipulator {
    TwoLinkManipulator::new(ManipulatorParams::default()).unwrap()
}

/// `max |N + Nᵀ|` for `N = Ṁ - 2 C_mat` with `Ṁ` by central differences
/// along `q̇`.
pub fn skew_residual(plant: &TwoLinkManipulator, q: &[f64], qd: &[f64]) -> f64 {
    let h = 1e-6;
    let qp = [q[0] + h * qd[0], q[1] + h * qd[1]];
    let qm = [q[0] - h * qd[0], q[1] - h * qd[1]];
    let m_dot = (plant.inertia(&qp) - plant.inertia(&qm)) / (2.0 * h);
    let n = m_dot - plant.coriolis_matrix(q, qd) * 2.0;
    (n + n.transpose()).amax()
}

pub fn worst_skew_residual(states: usize, seed: u64) -> f64 {
    let plant = manipulator();
    let mut r = rng(seed);
    (0..states)
        .map(|_| {
            let q = [r.random_range(-7.0..7.0), r.random_range(-7.0..7.0)];
            let qd = [r.random_range(-10.0..10.0), r.random_range(-10.0..10.0)];
            skew_residual(&plant, &q, &qd)
        })
        .fold(0.0, f64::max)
}

pub fn is_spd(g: &Matrix2<f64>) -> bool {
    (g - g.transpose()).amax() <= 1e-12 * g.amax() && g[(0, 0)] > 0.0 && g.determinant() > 0.0
}

/// Error of RK4 against the closed form of `ẍ = cos(ωt)` after 2 s.
pub fn double_integrator_error(dt: f64) -> f64 {
    let w = 3.0;
    let t_end = 2.0;
    let steps = (t_end / dt).round() as usize;
    let x0 = DVector::from_vec(vec![0.5, -1.0]);
    let x = rk4_integrate(
        |t, x: &DVector<f64>| Ok::<_, Infallible>(DVector::from_vec(vec![x[1], (w * t).cos()])),
        0.0,
        &x0,
        dt,
        steps,
    )
    .unwrap();
    let pos = 0.5 - t_end + (1.0 - (w * t_end).cos()) / (w * w);
    let vel = -1.0 + (w * t_end).sin() / w;
    (x[0] - pos).abs().max((x[1] - vel).abs())
}

/// Smallest observed order over successive step halvings.
pub fn observed_order() -> f64 {
    let errs: Vec<f64> = [0.1, 0.05, 0.025, 0.0125]
        .iter()
        .map(|&dt| double_integrator_error(dt))
        .collect();
    errs.windows(2)
        .map(|e| (e[0] / e[1]).log2())
        .fold(f64::INFINITY, f64::min)
}
