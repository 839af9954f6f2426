use nalgebra::DVector;

/// One classical fourth-order Runge-Kutta step of `ẋ = f(t, x)`.
pub fn rk4_step<F, E>(f: &mut F, t: f64, x: &DVector<f64>, dt: f64) -> Result<DVector<f64>, E>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>, E>,
{
    let k1 = f(t, x)?;
    let k2 = f(t + 0.5 * dt, &(x + &k1 * (0.5 * dt)))?;
    let k3 = f(t + 0.5 * dt, &(x + &k2 * (0.5 * dt)))?;
    let k4 = f(t + dt, &(x + &k3 * dt))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Integrates from `t0` over `steps` fixed steps.
pub fn rk4_integrate<F, E>(
    mut f: F,
    t0: f64,
    x0: &DVector<f64>,
    dt: f64,
    steps: usize,
) -> Result<DVector<f64>, E>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>, E>,
{
    let mut x = x0.clone();
    for k in 0..steps {
        x = rk4_step(&mut f, t0 + k as f64 * dt, &x, dt)?;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    #[test]
    fn exponential_decay() {
        let x = rk4_integrate(
            |_, x: &DVector<f64>| Ok::<_, Infallible>(-x),
            0.0,
            &DVector::from_element(1, 1.0),
            1e-2,
            100,
        )
        .unwrap();
        assert!((x[0] - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn time_dependent_rhs_is_exact_for_cubics() {
        // ẋ = 3t², x(0) = 0 → x(t) = t³, integrated exactly by RK4
        let x = rk4_integrate(
            |t, _: &DVector<f64>| Ok::<_, Infallible>(DVector::from_element(1, 3.0 * t * t)),
            0.0,
            &DVector::zeros(1),
            0.1,
            20,
        )
        .unwrap();
        assert!((x[0] - 8.0).abs() < 1e-12);
    }
}
