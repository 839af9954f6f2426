mod common;

use std::convert::Infallible;

use nalgebra::DVector;
use ptsf_core::plant::DoubleIntegrator;
use ptsf_core::sim::{rk4_integrate, rk4_step};
use ptsf_core::ControlAffinePlant;

#[test]
fn rk4_converges_at_fourth_order() {
    let order = common::observed_order();
    assert!(order >= 3.8, "observed order {order}");
}

#[test]
fn constant_input_double_integrator_matches_closed_form() {
    let plant = DoubleIntegrator::new(2);
    let u = DVector::from_vec(vec![1.0, 0.0]);
    let x0 = DVector::from_vec(vec![0.2, -0.4, 0.5, 1.0]);
    let x = rk4_integrate(
        |_, x: &DVector<f64>| plant.derivative(x.as_slice(), &u),
        0.0,
        &x0,
        1e-3,
        1000,
    )
    .unwrap();
    let expect = [0.2 + 0.5 + 0.5, -0.4 + 1.0, 0.5 + 1.0, 1.0];
    for k in 0..4 {
        assert!(
            (x[k] - expect[k]).abs() < 1e-8,
            "{k}: {} vs {}",
            x[k],
            expect[k]
        );
    }
}

#[test]
fn step_halving_changes_state_by_little() {
    let f = |t: f64, x: &DVector<f64>| {
        Ok::<_, Infallible>(DVector::from_vec(vec![x[1], (3.0 * t).cos() - 0.5 * x[0]]))
    };
    let x0 = DVector::from_vec(vec![1.0, 0.0]);
    let coarse = rk4_integrate(f, 0.0, &x0, 1e-3, 1000).unwrap();
    let fine = rk4_integrate(f, 0.0, &x0, 5e-4, 2000).unwrap();
    assert!((coarse - fine).amax() < 1e-6);
}

#[test]
fn zero_dynamics_keep_state() {
    let plant = DoubleIntegrator::new(2);
    let x0 = DVector::from_vec(vec![1.0, 2.0, 0.0, 0.0]);
    let mut f = |_, x: &DVector<f64>| plant.derivative(x.as_slice(), &DVector::zeros(2));
    assert_eq!(rk4_step(&mut f, 0.0, &x0, 0.1).unwrap(), x0);
}
