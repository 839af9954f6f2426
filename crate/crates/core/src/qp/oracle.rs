use nalgebra::{DMatrix, DVector};

use super::{
    feasibility_tol, finish, relax_and_project, Projection, QpError, QpProblem, QpSolution,
    QpStatus, Row,
};

/// Brute-force reference solver: tries every set of at most `m` rows as the
/// active set, solves the equality-constrained projection in closed form, and
/// keeps the feasible candidate with the smallest objective. Ties go to the
/// lexicographically smallest row list.
pub fn solve_oracle(problem: &QpProblem) -> Result<QpSolution, QpError> {
    problem.validate()?;
    let rows = problem.rows();
    if rows.len() > 24 {
        return Err(QpError::InvalidProblem(format!(
            "oracle enumeration limited to 24 rows, got {}",
            rows.len()
        )));
    }
    if let Some(p) = enumerate(&problem.nominal, &rows) {
        return Ok(finish(problem, &rows, p, 0.0, QpStatus::Optimal));
    }
    let (p, slack) = relax_and_project(problem, &rows, |r| Ok(enumerate(&problem.nominal, r)))?;
    Ok(finish(
        problem,
        &rows,
        p,
        slack,
        QpStatus::InfeasibleRelaxed,
    ))
}

fn enumerate(nominal: &DVector<f64>, rows: &[Row]) -> Option<Projection> {
    let m = nominal.len();
    let mut best: Option<(f64, Projection)> = None;
    let mut subset = Vec::with_capacity(m);
    visit(0, rows.len(), m, &mut subset, &mut |set| {
        let Some((u, lam)) = project_onto(nominal, rows, set) else {
            return;
        };
        if rows
            .iter()
            .any(|r| r.a.dot(&u) - r.b < -feasibility_tol(r, &u))
        {
            return;
        }
        let obj = (&u - nominal).norm_squared();
        // lexicographic order of visits makes the first optimum the smallest list
        let better = match &best {
            None => true,
            Some((b, _)) => obj < *b - 1e-12 * (1.0 + b.abs()),
        };
        if better {
            let mut multipliers = vec![0.0; rows.len()];
            for (i, l) in set.iter().zip(lam.iter()) {
                multipliers[*i] = *l;
            }
            best = Some((obj, Projection { u, multipliers }));
        }
    });
    best.map(|(_, p)| p)
}

/// Visits subsets of `0..n` with at most `k` elements in lexicographic order.
fn visit(start: usize, n: usize, k: usize, subset: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    f(subset);
    if subset.len() == k {
        return;
    }
    for i in start..n {
        subset.push(i);
        visit(i + 1, n, k, subset, f);
        subset.pop();
    }
}

/// `u = u_nom + N λ` with `Nᵀu = b_S`; `None` when the rows are dependent.
fn project_onto(
    nominal: &DVector<f64>,
    rows: &[Row],
    set: &[usize],
) -> Option<(DVector<f64>, DVector<f64>)> {
    if set.is_empty() {
        return Some((nominal.clone(), DVector::zeros(0)));
    }
    let n = nominal.len();
    let normals = DMatrix::from_fn(n, set.len(), |i, k| rows[set[k]].a[i]);
    let gram = normals.tr_mul(&normals);
    let scale = gram.diagonal().amax();
    if scale == 0.0 {
        return None;
    }
    let rhs =
        DVector::from_iterator(set.len(), set.iter().map(|&i| rows[i].b)) - normals.tr_mul(nominal);
    let ch = gram.cholesky()?;
    if ch.l_dirty().diagonal().min() <= 1e-7 * scale.sqrt() {
        return None;
    }
    let lam = ch.solve(&rhs);
    let u = nominal + &normals * &lam;
    Some((u, lam))
}
