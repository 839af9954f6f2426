use nalgebra::{DMatrix, DVector};

use super::{
    feasibility_tol, finish, relax_and_project, Projection, QpError, QpProblem, QpSolution,
    QpStatus, Row,
};

/// Dual active-set solve of the projection problem.
pub fn solve(problem: &QpProblem) -> Result<QpSolution, QpError> {
    problem.validate()?;
    let rows = problem.rows();
    if let Some(p) = dual_project(&problem.nominal, &rows)? {
        return Ok(finish(problem, &rows, p, 0.0, QpStatus::Optimal));
    }
    let (p, slack) = relax_and_project(problem, &rows, |r| dual_project(&problem.nominal, r))?;
    Ok(finish(
        problem,
        &rows,
        p,
        slack,
        QpStatus::InfeasibleRelaxed,
    ))
}

/// Goldfarb-Idnani iterations with identity Hessian. `None` means the rows
/// are infeasible.
fn dual_project(nominal: &DVector<f64>, rows: &[Row]) -> Result<Option<Projection>, QpError> {
    let n = nominal.len();
    let mut u = nominal.clone();
    let mut active: Vec<usize> = Vec::new();
    let mut lambda: Vec<f64> = Vec::new();
    let max_iter = 50 * (rows.len() + n) + 100;
    let mut iter = 0;

    loop {
        // most violated inactive row; first index wins ties
        let mut pick: Option<(usize, f64)> = None;
        for (i, r) in rows.iter().enumerate() {
            if active.contains(&i) {
                continue;
            }
            let s = r.a.dot(&u) - r.b;
            if s < -feasibility_tol(r, &u) && pick.is_none_or(|(_, best)| s < best) {
                pick = Some((i, s));
            }
        }
        let Some((p, _)) = pick else {
            break;
        };
        let ap = &rows[p].a;
        let mut lambda_p = 0.0;

        loop {
            iter += 1;
            if iter > max_iter {
                return Err(QpError::IterationLimit(max_iter));
            }
            let (z, r) = directions(rows, &active, ap);
            let zz = z.dot(ap);
            let full_step = if z.norm_squared() > 1e-14 * ap.norm_squared() && zz > 0.0 {
                let s = ap.dot(&u) - rows[p].b;
                Some(-s / zz)
            } else {
                None
            };
            // largest dual step before an active multiplier hits zero
            let mut partial: Option<(usize, f64)> = None;
            for (k, &rk) in r.iter().enumerate() {
                if rk > 0.0 {
                    let t = lambda[k] / rk;
                    if partial.is_none_or(|(_, best)| t < best) {
                        partial = Some((k, t));
                    }
                }
            }
            match (full_step, partial) {
                (None, None) => return Ok(None),
                (None, Some((k, t))) => {
                    update_duals(&mut lambda, &r, t);
                    lambda_p += t;
                    active.remove(k);
                    lambda.remove(k);
                }
                (Some(t2), partial) => {
                    let (t, drop) = match partial {
                        Some((k, t1)) if t1 < t2 => (t1, Some(k)),
                        _ => (t2, None),
                    };
                    u += &z * t;
                    update_duals(&mut lambda, &r, t);
                    lambda_p += t;
                    match drop {
                        Some(k) => {
                            active.remove(k);
                            lambda.remove(k);
                        }
                        None => {
                            active.push(p);
                            lambda.push(lambda_p);
                            break;
                        }
                    }
                }
            }
        }
    }

    let mut multipliers = vec![0.0; rows.len()];
    for (i, l) in active.iter().zip(&lambda) {
        multipliers[*i] = *l;
    }
    Ok(Some(Projection { u, multipliers }))
}

fn update_duals(lambda: &mut [f64], r: &DVector<f64>, t: f64) {
    for (l, rk) in lambda.iter_mut().zip(r.iter()) {
        *l = (*l - t * rk).max(0.0);
    }
}

/// Primal direction `z` (component of `a_p` orthogonal to the active normals)
/// and dual direction `r = (NᵀN)⁻¹ Nᵀ a_p`.
fn directions(rows: &[Row], active: &[usize], ap: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    if active.is_empty() {
        return (ap.clone(), DVector::zeros(0));
    }
    let n = ap.len();
    let normals = DMatrix::from_fn(n, active.len(), |i, k| rows[active[k]].a[i]);
    let gram = normals.tr_mul(&normals);
    let rhs = normals.tr_mul(ap);
    // active normals are kept linearly independent, so the Gram matrix is SPD
    let r = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram
            .lu()
            .solve(&rhs)
            .unwrap_or_else(|| DVector::zeros(active.len())),
    };
    let z = ap - &normals * &r;
    (z, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::LinearConstraint;

    fn c(a: &[f64], b: f64) -> LinearConstraint {
        LinearConstraint {
            a: DVector::from_column_slice(a),
            b,
        }
    }

    #[test]
    fn feasible_nominal_is_returned() {
        let p = QpProblem::new(
            DVector::from_vec(vec![1.0, 2.0]),
            vec![c(&[1.0, 0.0], 0.0), c(&[0.0, 1.0], -1.0)],
        );
        let s = solve(&p).unwrap();
        assert_eq!(s.u, p.nominal);
        assert!(s.active_set.is_empty());
        assert_eq!(s.status, QpStatus::Optimal);
    }

    #[test]
    fn halfspace_projection() {
        let p = QpProblem::new(DVector::zeros(2), vec![c(&[1.0, 0.0], 1.0)]);
        let s = solve(&p).unwrap();
        assert!((s.u - DVector::from_vec(vec![1.0, 0.0])).amax() < 1e-14);
        assert_eq!(s.active_set, vec![0]);
        assert!((s.multipliers[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn contradictory_rows_relax_symmetrically() {
        let p = QpProblem::new(
            DVector::zeros(2),
            vec![c(&[1.0, 0.0], 1.0), c(&[-1.0, 0.0], 0.0)],
        );
        let s = solve(&p).unwrap();
        assert_eq!(s.status, QpStatus::InfeasibleRelaxed);
        assert!((s.u[0] - 0.5).abs() < 1e-9, "{}", s.u[0]);
        assert!((s.slack - 0.5).abs() < 1e-9);
        assert!(s.u[1].abs() < 1e-12);
    }

    #[test]
    fn corner_of_two_rows() {
        // u >= (1, 1) from the origin
        let p = QpProblem::new(
            DVector::zeros(2),
            vec![c(&[1.0, 0.0], 1.0), c(&[0.0, 1.0], 1.0)],
        );
        let s = solve(&p).unwrap();
        assert!((s.u - DVector::from_vec(vec![1.0, 1.0])).amax() < 1e-14);
        assert_eq!(s.active_set, vec![0, 1]);
    }

    #[test]
    fn box_bounds_are_respected() {
        let mut p = QpProblem::new(
            DVector::from_vec(vec![5.0, -5.0]),
            vec![c(&[1.0, 1.0], 0.0)],
        );
        p.bounds = Some((
            DVector::from_vec(vec![-1.0, -1.0]),
            DVector::from_vec(vec![1.0, 1.0]),
        ));
        let s = solve(&p).unwrap();
        assert!((s.u - DVector::from_vec(vec![1.0, -1.0])).amax() < 1e-12);
        assert!(s.kkt_residual < 1e-8);
    }

    #[test]
    fn identical_problems_give_identical_bits() {
        let p = QpProblem::new(
            DVector::from_vec(vec![0.3, -0.7]),
            vec![
                c(&[1.0, 2.0], 1.0),
                c(&[-0.5, 1.0], 0.2),
                c(&[3.0, -1.0], -0.1),
            ],
        );
        assert_eq!(solve(&p).unwrap(), solve(&p).unwrap());
    }
}
