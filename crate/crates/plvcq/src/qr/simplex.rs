//! Two-phase bounded-variable simplex on the box LP dual, used as a
//! fallback when the interior point iteration stalls on small problems.
//!
//! Bland's smallest-index rule everywhere, so the method terminates even on
//! heavily degenerate instances. The returned value is the set of basic
//! observation rows: at a simplex optimum every basic row has a zero
//! residual, so the caller can recover the coefficients by interpolation.

use crate::linalg;
use crate::scalar::Scalar;
use ndarray::{Array1, Array2};

#[derive(Clone, Copy, PartialEq, Eq)]
enum ColState {
    Basic,
    Lower,
    Upper,
    /// Artificial that has left the basis; never eligible again.
    Out,
}

pub(super) struct SimplexOutcome {
    pub basis_rows: Vec<usize>,
}

const MAX_PIVOTS: usize = 20_000;
const REFRESH_EVERY: usize = 50;

/// Solve `min c'x  s.t.  A x = tau A 1, 0 <= x <= 1`. Returns `None` when
/// the pivot cap is hit or a basis matrix cannot be factored.
pub(super) fn solve_box_lp_simplex<F: Scalar>(
    a: &Array2<F>,
    c: &Array1<F>,
    tau: F,
) -> Option<SimplexOutcome> {
    let d = a.nrows();
    let n = a.ncols();
    let one = F::one();
    let b: Array1<F> = a.sum_axis(ndarray::Axis(1)) * tau;

    let amax = a.iter().fold(F::zero(), |m, v| m.max(v.abs()));
    let cmax = c.iter().fold(F::zero(), |m, v| m.max(v.abs()));
    let eps_scale = F::cast(F::epsilon().to64() / f64::EPSILON);
    let tol_rc = F::cast(1e-9) * eps_scale * (one + cmax + amax);
    let tol_piv = F::cast(1e-11) * eps_scale * (one + amax);
    let feas_tol = F::cast(1e-8) * eps_scale * (one + b.iter().fold(F::zero(), |m, v| m.max(v.abs())));

    // global column indexing: originals 0..n, artificials n..n+d
    let total = n + d;
    let art_sign: Vec<F> = (0..d)
        .map(|k| if b[k] < F::zero() { -one } else { one })
        .collect();
    let mut state = vec![ColState::Lower; total];
    let mut basis: Vec<usize> = (0..d).map(|k| n + k).collect();
    for &col in &basis {
        state[col] = ColState::Basic;
    }
    let mut x_basic: Vec<F> = (0..d).map(|k| b[k].abs()).collect();

    let column = |j: usize| -> Array1<F> {
        if j < n {
            a.column(j).to_owned()
        } else {
            let mut e = Array1::<F>::zeros(d);
            e[j - n] = art_sign[j - n];
            e
        }
    };
    let upper = |j: usize| -> F {
        if j < n {
            one
        } else {
            F::infinity()
        }
    };

    let mut phase = 1;
    let mut pivots = 0usize;
    loop {
        if pivots > MAX_PIVOTS {
            return None;
        }
        // factor current basis
        let mut ab = Array2::<F>::zeros((d, d));
        for (pos, &col) in basis.iter().enumerate() {
            ab.column_mut(pos).assign(&column(col));
        }
        let lu = linalg::lu_factor(&ab.view())?;

        if pivots % REFRESH_EVERY == 0 {
            // recompute basic values from scratch to shed drift
            let mut rhs = b.clone();
            for j in 0..n {
                if state[j] == ColState::Upper {
                    rhs = rhs - &column(j);
                }
            }
            let fresh = lu.solve(&rhs.view());
            for (pos, v) in fresh.iter().enumerate() {
                x_basic[pos] = *v;
            }
        }

        let cost = |j: usize| -> F {
            match phase {
                1 => {
                    if j < n {
                        F::zero()
                    } else {
                        one
                    }
                }
                _ => {
                    if j < n {
                        c[j]
                    } else {
                        F::zero()
                    }
                }
            }
        };
        let cb = Array1::from_shape_fn(d, |pos| cost(basis[pos]));
        let y = lu.solve_transpose(&cb.view());

        // Bland entering: smallest-index eligible original column
        let mut entering = None;
        for j in 0..n {
            let rc = cost(j) - a.column(j).dot(&y);
            match state[j] {
                ColState::Lower if rc < -tol_rc => {
                    entering = Some((j, true));
                    break;
                }
                ColState::Upper if rc > tol_rc => {
                    entering = Some((j, false));
                    break;
                }
                _ => {}
            }
        }
        let Some((e, from_lower)) = entering else {
            // phase optimal
            if phase == 1 {
                let art_level: F = basis
                    .iter()
                    .zip(&x_basic)
                    .filter(|(&col, _)| col >= n)
                    .map(|(_, &v)| v)
                    .sum();
                if art_level > feas_tol {
                    return None;
                }
                phase = 2;
                pivots += 1; // force a value refresh cadence restart eventually
                continue;
            }
            let mut basis_rows: Vec<usize> =
                basis.iter().copied().filter(|&col| col < n).collect();
            basis_rows.sort_unstable();
            return Some(SimplexOutcome { basis_rows });
        };

        let dir = lu.solve(&column(e).view());
        // rate of change of basic value when the entering variable moves
        // away from its bound by t
        let rate = |pos: usize| -> F {
            if from_lower {
                -dir[pos]
            } else {
                dir[pos]
            }
        };

        // ratio test: smallest t at which something hits a bound
        let mut t_star = upper(e); // entering's own bound flip distance
        let mut leaving: Option<(usize, bool)> = None; // (basis pos, leaves-at-upper)
        for pos in 0..d {
            let g = rate(pos);
            let v = x_basic[pos];
            let col = basis[pos];
            if g < -tol_piv {
                let t = v / -g;
                if t < t_star - tol_piv
                    || (t < t_star + tol_piv
                        && leaving.map_or(false, |(lp, _)| basis[lp] > col))
                {
                    t_star = t.max(F::zero());
                    leaving = Some((pos, false));
                }
            } else if g > tol_piv {
                let up = upper(col);
                if up.is_finite() {
                    let t = (up - v) / g;
                    if t < t_star - tol_piv
                        || (t < t_star + tol_piv
                            && leaving.map_or(false, |(lp, _)| basis[lp] > col))
                    {
                        t_star = t.max(F::zero());
                        leaving = Some((pos, true));
                    }
                }
            }
        }
        if !t_star.is_finite() {
            return None; // unbounded; cannot happen for a box LP
        }

        // apply the move
        for pos in 0..d {
            x_basic[pos] += rate(pos) * t_star;
        }
        match leaving {
            None => {
                // bound flip of the entering variable
                state[e] = if from_lower {
                    ColState::Upper
                } else {
                    ColState::Lower
                };
            }
            Some((pos, at_upper)) => {
                let out = basis[pos];
                state[out] = if out >= n {
                    ColState::Out
                } else if at_upper {
                    ColState::Upper
                } else {
                    ColState::Lower
                };
                basis[pos] = e;
                state[e] = ColState::Basic;
                x_basic[pos] = if from_lower { t_star } else { one - t_star };
            }
        }
        pivots += 1;
    }
}
