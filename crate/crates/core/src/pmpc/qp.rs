//! Dense box-constrained convex QP, primal active-set method.
//!
//! minimize ½ zᵀHz + hᵀz subject to lo ≤ z ≤ hi, with H symmetric positive definite.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bound {
    Free,
    Lower,
    Upper,
}

/// Result of [`solve_box_qp`].
#[derive(Debug, Clone)]
pub struct BoxQpSolution {
    pub z: DVector<f64>,
    pub iterations: usize,
}

/// Cholesky factor of `H` restricted to `free`; `None` for an empty set.
fn factor(h_mat: &DMatrix<f64>, free: &[usize]) -> Result<Option<Cholesky<f64, Dyn>>> {
    if free.is_empty() {
        return Ok(None);
    }
    DMatrix::from_fn(free.len(), free.len(), |r, c| h_mat[(free[r], free[c])])
        .cholesky()
        .map(Some)
        .ok_or_else(|| Error::Solver("QP Hessian is not positive definite".into()))
}

/// Number of rank updates after which the factor is recomputed from scratch.
const REFACTOR_EVERY: usize = 32;

/// Solves the box QP from the feasible start `z0`.
///
/// The factor of the free block is updated in place when a bound enters or
/// leaves the working set.
pub fn solve_box_qp(
    h_mat: &DMatrix<f64>,
    h: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    z0: &DVector<f64>,
) -> Result<BoxQpSolution> {
    let n = h.len();
    if h_mat.nrows() != n || h_mat.ncols() != n || lo.len() != n || hi.len() != n || z0.len() != n {
        return Err(Error::InvalidArgument("box QP dimension mismatch".into()));
    }
    if (0..n).any(|i| !(lo[i] <= hi[i])) {
        return Err(Error::InvalidArgument("box QP has empty bounds".into()));
    }
    let mut z = DVector::from_fn(n, |i, _| z0[i].clamp(lo[i], hi[i]));
    // Start with every bound the initial point sits on and the gradient pushes against.
    let grad0 = h_mat * &z + h;
    let mut state = vec![Bound::Free; n];
    for i in 0..n {
        if lo[i] == hi[i] || (z[i] == lo[i] && grad0[i] > 0.0) {
            state[i] = Bound::Lower;
        } else if z[i] == hi[i] && grad0[i] < 0.0 {
            state[i] = Bound::Upper;
        }
    }
    let mut free: Vec<usize> = (0..n).filter(|&i| state[i] == Bound::Free).collect();
    let mut chol = factor(h_mat, &free)?;
    let mut updates = 0;
    let scale = 1.0 + h.amax() + h_mat.amax();
    let mult_tol = 1e-12 * scale;
    let max_iter = 10 * n + 50;

    let mut at_subspace_min = false;
    let mut grad = grad0;
    for iter in 0..max_iter {
        let mut step = DVector::zeros(n);
        if let (Some(c), false) = (&chol, at_subspace_min) {
            let rhs = DVector::from_fn(free.len(), |r, _| -grad[free[r]]);
            let p = c.solve(&rhs);
            for (r, &i) in free.iter().enumerate() {
                step[i] = p[r];
            }
        }
        if at_subspace_min || step.amax() <= 1e-14 * (1.0 + z.amax()) {
            at_subspace_min = false;
            grad = h_mat * &z + h;
            // Stationary on the working set: release the worst multiplier.
            let mut worst: Option<(usize, f64)> = None;
            for i in 0..n {
                let viol = match state[i] {
                    Bound::Lower if lo[i] < hi[i] => -grad[i],
                    Bound::Upper => grad[i],
                    _ => continue,
                };
                if viol > mult_tol && worst.map_or(true, |(_, w)| viol > w) {
                    worst = Some((i, viol));
                }
            }
            let Some((i, _)) = worst else {
                return Ok(BoxQpSolution { z, iterations: iter });
            };
            state[i] = Bound::Free;
            let r = free.partition_point(|&k| k < i);
            free.insert(r, i);
            updates += 1;
            chol = match chol {
                Some(c) if updates % REFACTOR_EVERY != 0 => {
                    let col = DVector::from_fn(free.len(), |k, _| h_mat[(free[k], i)]);
                    let c = c.insert_column(r, col);
                    if c.l_dirty().diagonal().iter().all(|d| d.is_finite() && *d > 0.0) {
                        Some(c)
                    } else {
                        factor(h_mat, &free)?
                    }
                }
                _ => factor(h_mat, &free)?,
            };
            continue;
        }
        let mut alpha = 1.0;
        let mut blocking: Option<(usize, Bound)> = None;
        for &i in &free {
            let (ratio, b) = if step[i] < 0.0 {
                ((lo[i] - z[i]) / step[i], Bound::Lower)
            } else if step[i] > 0.0 {
                ((hi[i] - z[i]) / step[i], Bound::Upper)
            } else {
                continue;
            };
            if ratio < alpha {
                alpha = ratio.max(0.0);
                blocking = Some((i, b));
            }
        }
        // The gradient follows the step column by column; it is recomputed
        // exactly before multipliers are checked.
        for &i in &free {
            let old = z[i];
            z[i] = match blocking {
                Some((b, Bound::Lower)) if b == i => lo[i],
                Some((b, _)) if b == i => hi[i],
                _ => (old + alpha * step[i]).clamp(lo[i], hi[i]),
            };
            if z[i] != old {
                grad.axpy(z[i] - old, &h_mat.column(i), 1.0);
            }
        }
        match blocking {
            Some((i, b)) => {
                state[i] = b;
                let r = free.binary_search(&i).expect("blocking index is free");
                free.remove(r);
                updates += 1;
                chol = match chol {
                    Some(c) if !free.is_empty() && updates % REFACTOR_EVERY != 0 => Some(c.remove_column(r)),
                    _ => factor(h_mat, &free)?,
                };
            }
            None => at_subspace_min = true,
        }
    }
    Err(Error::Solver("box QP iteration limit".into()))
}
