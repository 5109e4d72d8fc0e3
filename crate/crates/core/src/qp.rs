//! Dense primal active-set solver for the small step subproblems of the
//! fitter:
//!
//! ```text
//! minimize ½ dᵀ H d + gᵀ d   subject to   E d = 0,   lower ≤ d ≤ upper
//! ```
//!
//! `H` must be symmetric positive definite and `d = 0` feasible. Problems
//! here have a handful of variables, so each working-set change simply
//! re-solves the reduced KKT system.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Active {
    Free,
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum QpError {
    Singular,
    IterationLimit,
}

const MAX_ITERATIONS: usize = 200;

pub(crate) fn solve(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    eq: &DMatrix<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
) -> Result<DVector<f64>, QpError> {
    let n = g.len();
    let mut d = DVector::<f64>::zeros(n);
    // Variables with a zero-width range are fixed from the start.
    let mut state: Vec<Active> = (0..n)
        .map(|i| {
            if upper[i] - lower[i] <= 0.0 {
                d[i] = lower[i].max(upper[i].min(0.0));
                Active::Lower
            } else {
                Active::Free
            }
        })
        .collect();
    let pinned: Vec<bool> = state.iter().map(|s| *s != Active::Free).collect();

    for _ in 0..MAX_ITERATIONS {
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == Active::Free).collect();
        let q = h * &d + g;
        let (step, nu) = equality_step(h, &q, eq, &free)?;
        let step_norm = step.amax();
        if step_norm <= 1e-15 * (1.0 + d.amax()) {
            // Stationary on the working set; check bound multipliers.
            let grad = &q + eq.transpose() * &nu;
            let mut worst = None;
            let mut worst_val = 0.0;
            for i in 0..n {
                if pinned[i] {
                    continue;
                }
                let violation = match state[i] {
                    Active::Lower => -grad[i],
                    Active::Upper => grad[i],
                    Active::Free => continue,
                };
                if violation > worst_val {
                    worst_val = violation;
                    worst = Some(i);
                }
            }
            match worst {
                Some(i) if worst_val > 1e-14 * (1.0 + g.amax()) => state[i] = Active::Free,
                _ => return Ok(d),
            }
            continue;
        }
        let mut alpha = 1.0;
        let mut blocking = None;
        for &i in &free {
            let s = step[i];
            let limit = if s < 0.0 {
                (lower[i] - d[i]) / s
            } else if s > 0.0 {
                (upper[i] - d[i]) / s
            } else {
                continue;
            };
            if limit < alpha {
                alpha = limit.max(0.0);
                blocking = Some((i, s < 0.0));
            }
        }
        d.axpy(alpha, &step, 1.0);
        if let Some((i, at_lower)) = blocking {
            if at_lower {
                d[i] = lower[i];
                state[i] = Active::Lower;
            } else {
                d[i] = upper[i];
                state[i] = Active::Upper;
            }
        }
    }
    Err(QpError::IterationLimit)
}

/// Newton step on the free variables with the others held fixed, keeping
/// `E d` unchanged. Returns the full-length step and the equality
/// multipliers (sign convention `H p + Eᵀν = −q`).
fn equality_step(
    h: &DMatrix<f64>,
    q: &DVector<f64>,
    eq: &DMatrix<f64>,
    free: &[usize],
) -> Result<(DVector<f64>, DVector<f64>), QpError> {
    let n = q.len();
    let m_all = eq.nrows();
    let mut step = DVector::zeros(n);
    let mut nu = DVector::zeros(m_all);
    if free.is_empty() {
        return Ok((step, nu));
    }
    // Equality rows that still involve a free variable.
    let rows: Vec<usize> = (0..m_all)
        .filter(|&r| free.iter().any(|&i| eq[(r, i)] != 0.0))
        .collect();
    let nf = free.len();
    let m = rows.len();
    let mut kkt = DMatrix::<f64>::zeros(nf + m, nf + m);
    let mut rhs = DVector::<f64>::zeros(nf + m);
    for (a, &i) in free.iter().enumerate() {
        for (b, &j) in free.iter().enumerate() {
            kkt[(a, b)] = h[(i, j)];
        }
        for (c, &r) in rows.iter().enumerate() {
            kkt[(a, nf + c)] = eq[(r, i)];
            kkt[(nf + c, a)] = eq[(r, i)];
        }
        rhs[a] = -q[i];
    }
    let sol = kkt.lu().solve(&rhs).ok_or(QpError::Singular)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(QpError::Singular);
    }
    for (a, &i) in free.iter().enumerate() {
        step[i] = sol[a];
    }
    for (c, &r) in rows.iter().enumerate() {
        nu[r] = sol[nf + c];
    }
    Ok((step, nu))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_2d(
        h: &DMatrix<f64>,
        g: &DVector<f64>,
        lower: &DVector<f64>,
        upper: &DVector<f64>,
    ) -> (f64, f64) {
        let obj = |x: f64, y: f64| {
            let d = DVector::from_vec(alloc::vec![x, y]);
            0.5 * d.dot(&(h * &d)) + g.dot(&d)
        };
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let steps = 2000;
        for a in 0..=steps {
            for b in 0..=steps {
                let x = lower[0] + (upper[0] - lower[0]) * a as f64 / steps as f64;
                let y = lower[1] + (upper[1] - lower[1]) * b as f64 / steps as f64;
                let f = obj(x, y);
                if f < best.0 {
                    best = (f, x, y);
                }
            }
        }
        (best.1, best.2)
    }

    #[test]
    fn unconstrained_interior_minimum() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let g = DVector::from_vec(alloc::vec![-1.0, -1.0]);
        let eq = DMatrix::zeros(0, 2);
        let lo = DVector::from_element(2, -10.0);
        let hi = DVector::from_element(2, 10.0);
        let d = solve(&h, &g, &eq, &lo, &hi).unwrap();
        let exact = h.clone().lu().solve(&(-&g)).unwrap();
        assert!((d - exact).amax() < 1e-14);
    }

    #[test]
    fn bound_constrained_matches_grid_search() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.8, 0.8, 1.0]);
        let g = DVector::from_vec(alloc::vec![-3.0, 1.0]);
        let eq = DMatrix::zeros(0, 2);
        let lo = DVector::from_vec(alloc::vec![-0.5, -0.25]);
        let hi = DVector::from_vec(alloc::vec![1.0, 0.75]);
        let d = solve(&h, &g, &eq, &lo, &hi).unwrap();
        let (bx, by) = brute_force_2d(&h, &g, &lo, &hi);
        assert!(
            (d[0] - bx).abs() < 2e-3 && (d[1] - by).abs() < 2e-3,
            "{d} vs ({bx}, {by})"
        );
    }

    #[test]
    fn equality_and_bounds() {
        // min ½‖d‖² − d₀ subject to d₀ + d₁ + d₂ = 0, d₀ ≤ 0.1.
        let h = DMatrix::identity(3, 3);
        let g = DVector::from_vec(alloc::vec![-1.0, 0.0, 0.0]);
        let eq = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        let lo = DVector::from_element(3, -1.0);
        let hi = DVector::from_vec(alloc::vec![0.1, 1.0, 1.0]);
        let d = solve(&h, &g, &eq, &lo, &hi).unwrap();
        assert!((d[0] - 0.1).abs() < 1e-14);
        assert!((d[1] + 0.05).abs() < 1e-14 && (d[2] + 0.05).abs() < 1e-14);
    }

    #[test]
    fn released_bound_when_multiplier_has_wrong_sign() {
        // Start stuck at a zero-width bound on x1; x0 must still move.
        let h = DMatrix::identity(2, 2);
        let g = DVector::from_vec(alloc::vec![2.0, -2.0]);
        let eq = DMatrix::zeros(0, 2);
        let lo = DVector::from_vec(alloc::vec![-1.0, 0.0]);
        let hi = DVector::from_vec(alloc::vec![1.0, 0.0]);
        let d = solve(&h, &g, &eq, &lo, &hi).unwrap();
        assert_eq!(d[1], 0.0);
        assert!((d[0] + 1.0).abs() < 1e-15);
    }
}
