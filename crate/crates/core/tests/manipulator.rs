mod common;

use ptsf_core::ControlAffinePlant;

#[test]
fn inertia_derivative_minus_twice_coriolis_is_skew() {
    let worst = common::worst_skew_residual(1000, 2);
    assert!(worst < 1e-6, "residual {worst:e}");
}

#[test]
fn input_map_is_spd_on_random_states() {
    let plant = common::manipulator();
    let mut r = common::rng(4);
    use rand::Rng;
    for _ in 0..1000 {
        let q = [r.random_range(-7.0..7.0), r.random_range(-7.0..7.0)];
        let (_, g) = plant.manipulator_fg(&q, &[0.0, 0.0]).unwrap();
        assert!(common::is_spd(&g), "{q:?}");
    }
}

#[test]
fn canonical_form_matches_lagrangian() {
    let plant = common::manipulator();
    let x = [0.3, -1.2, 0.7, 2.0];
    let u = nalgebra::DVector::from_vec(vec![4.0, -3.0]);
    let dx = plant.derivative(&x, &u).unwrap();
    let m = plant.inertia(&x[..2]);
    let c = plant.coriolis_matrix(&x[..2], &x[2..]);
    let g = plant.gravity_vector(&x[..2]);
    let d = plant.true_uncertainty(&x[..2]);
    let qdd = nalgebra::Vector2::new(dx[2], dx[3]);
    let qd = nalgebra::Vector2::new(x[2], x[3]);
    let u2 = nalgebra::Vector2::new(u[0], u[1]);
    // M q̈ + C q̇ + G = u + M d
    let residual = m * qdd + c * qd + g - u2 - m * d;
    assert!(residual.amax() < 1e-10, "{residual}");
}
