//! Small dense linear algebra kernels.
//!
//! The design matrices in this crate are tall and thin (N up to a few
//! thousand, a few dozen columns), so plain dense Cholesky on the Gram
//! matrix is both fast and robust. Nothing here forms an N-by-N matrix.

use crate::scalar::Scalar;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
/// Returns `None` when a pivot is not strictly positive.
pub fn cholesky<F: Scalar>(a: &ArrayView2<F>) -> Option<Array2<F>> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut l = Array2::<F>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d = d - l[[j, k]] * l[[j, k]];
        }
        if d <= F::zero() || !d.is_finite() {
            return None;
        }
        let dj = d.sqrt();
        l[[j, j]] = dj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s = s - l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / dj;
        }
    }
    Some(l)
}

/// Solve `L L' x = b` given the lower Cholesky factor.
pub fn cholesky_solve<F: Scalar>(l: &Array2<F>, b: &ArrayView1<F>) -> Array1<F> {
    let n = l.nrows();
    let mut x = b.to_owned();
    // forward substitution
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s = s - l[[i, k]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    // back substitution with L'
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s = s - l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// Solve the SPD system `a x = b`; `None` if Cholesky breaks down.
pub fn solve_spd<F: Scalar>(a: &ArrayView2<F>, b: &ArrayView1<F>) -> Option<Array1<F>> {
    cholesky(a).map(|l| cholesky_solve(&l, b))
}

/// Result of a pivoted Gram-matrix solve with rank detection.
pub struct GramSolve<F> {
    /// Solution with zeros in the dropped coordinates.
    pub solution: Array2<F>,
    /// Column indices dropped as numerically collinear.
    pub dropped: Vec<usize>,
    /// Ratio of the largest to the smallest retained pivot.
    pub condition: f64,
}

/// Solve `G x = B` for a symmetric positive semidefinite `G`, dropping
/// columns whose pivot falls below `rel_tol` times the largest initial
/// diagonal. Dropped coordinates are fixed at zero, which leaves the fitted
/// projection unchanged when the dropped columns are exact linear
/// combinations of the retained ones.
pub fn gram_solve_dropping<F: Scalar>(
    g: &ArrayView2<F>,
    b: &ArrayView2<F>,
    rel_tol: f64,
) -> GramSolve<F> {
    let n = g.nrows();
    let max_diag = (0..n)
        .map(|i| g[[i, i]])
        .fold(F::zero(), |a, v| if v > a { v } else { a });
    let tol = F::cast(rel_tol) * max_diag;

    // Greedy ordering by pivot magnitude: factor the best-conditioned subset.
    let mut kept: Vec<usize> = Vec::new();
    let mut dropped: Vec<usize> = Vec::new();
    let mut remaining: Vec<usize> = (0..n).collect();
    // Working copy of the trailing Schur complement diagonal.
    let mut work = g.to_owned();
    let mut l_rows: Vec<Array1<F>> = Vec::new(); // rows of L restricted to kept set
    let mut min_pivot = F::infinity();
    let mut max_pivot = F::zero();

    while !remaining.is_empty() {
        // pick the largest remaining diagonal entry
        let (pos, &col) = remaining
            .iter()
            .enumerate()
            .max_by(|a, b| {
                work[[*a.1, *a.1]]
                    .partial_cmp(&work[[*b.1, *b.1]])
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap();
        let pivot = work[[col, col]];
        if pivot <= tol || !pivot.is_finite() {
            // everything left is collinear with the kept set
            dropped.extend(remaining.iter().copied());
            break;
        }
        remaining.remove(pos);
        let d = pivot.sqrt();
        if pivot < min_pivot {
            min_pivot = pivot;
        }
        if pivot > max_pivot {
            max_pivot = pivot;
        }
        // build the new L column over all original indices
        let mut lcol = Array1::<F>::zeros(n);
        lcol[col] = d;
        for &j in &remaining {
            let mut s = work[[j, col]];
            // subtract contributions of previously kept columns
            for (step, &_k) in kept.iter().enumerate() {
                let lr = &l_rows[step];
                s = s - lr[j] * lr[col];
            }
            lcol[j] = s / d;
        }
        // update trailing diagonal (we only consult diagonals for pivoting)
        for &j in &remaining {
            work[[j, j]] = work[[j, j]] - lcol[j] * lcol[j];
        }
        // also update off-diagonals lazily: store the column, consume later
        kept.push(col);
        l_rows.push(lcol);
    }

    // Off-diagonal updates above are folded into the column construction, but
    // the `work` matrix off-diagonals were never updated; recompute s using
    // stored l_rows instead (done in the loop). Solve on the kept subset.
    let r = kept.len();
    let mut lk = Array2::<F>::zeros((r, r));
    for (i, &_ci) in kept.iter().enumerate() {
        for j in 0..=i {
            lk[[i, j]] = l_rows[j][kept[i]];
        }
    }
    let nrhs = b.ncols();
    let mut solution = Array2::<F>::zeros((n, nrhs));
    for rhs in 0..nrhs {
        // gather, solve, scatter
        let mut y = Array1::<F>::zeros(r);
        for (i, &ci) in kept.iter().enumerate() {
            y[i] = b[[ci, rhs]];
        }
        for i in 0..r {
            let mut s = y[i];
            for k in 0..i {
                s = s - lk[[i, k]] * y[k];
            }
            y[i] = s / lk[[i, i]];
        }
        for i in (0..r).rev() {
            let mut s = y[i];
            for k in (i + 1)..r {
                s = s - lk[[k, i]] * y[k];
            }
            y[i] = s / lk[[i, i]];
        }
        for (i, &ci) in kept.iter().enumerate() {
            solution[[ci, rhs]] = y[i];
        }
    }
    dropped.sort_unstable();
    let condition = if r == 0 {
        f64::INFINITY
    } else {
        (max_pivot / min_pivot).to64()
    };
    GramSolve {
        solution,
        dropped,
        condition,
    }
}

/// Frobenius norm.
pub fn fro_norm<F: Scalar>(a: &ArrayView2<F>) -> F {
    a.iter().map(|v| *v * *v).sum::<F>().sqrt()
}

/// Dense LU factorization with partial pivoting.
pub struct Lu<F> {
    lu: Array2<F>,
    /// `perm[i]` is the original row stored in factored row `i`.
    perm: Vec<usize>,
}

/// Factor a square matrix; `None` when a pivot column is numerically zero.
pub fn lu_factor<F: Scalar>(a: &ArrayView2<F>) -> Option<Lu<F>> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut lu = a.to_owned();
    let mut perm: Vec<usize> = (0..n).collect();
    let scale = a
        .iter()
        .fold(F::zero(), |m, v| if v.abs() > m { v.abs() } else { m });
    let tiny = (scale + F::one()) * F::cast(1e-13) * F::cast(F::epsilon().to64() / 2.2e-16);
    for k in 0..n {
        // partial pivot
        let mut p = k;
        let mut best = lu[[k, k]].abs();
        for i in (k + 1)..n {
            let v = lu[[i, k]].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best <= tiny {
            return None;
        }
        if p != k {
            perm.swap(p, k);
            for j in 0..n {
                let tmp = lu[[k, j]];
                lu[[k, j]] = lu[[p, j]];
                lu[[p, j]] = tmp;
            }
        }
        let pivot = lu[[k, k]];
        for i in (k + 1)..n {
            let m = lu[[i, k]] / pivot;
            lu[[i, k]] = m;
            for j in (k + 1)..n {
                let upd = lu[[k, j]];
                lu[[i, j]] = lu[[i, j]] - m * upd;
            }
        }
    }
    Some(Lu { lu, perm })
}

impl<F: Scalar> Lu<F> {
    /// Solve `A x = b`.
    pub fn solve(&self, b: &ArrayView1<F>) -> Array1<F> {
        let n = self.perm.len();
        let mut x = Array1::<F>::zeros(n);
        for i in 0..n {
            x[i] = b[self.perm[i]];
        }
        // L (unit lower) forward
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s = s - self.lu[[i, k]] * x[k];
            }
            x[i] = s;
        }
        // U back
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s = s - self.lu[[i, k]] * x[k];
            }
            x[i] = s / self.lu[[i, i]];
        }
        x
    }

    /// Solve `A' y = c`.
    pub fn solve_transpose(&self, c: &ArrayView1<F>) -> Array1<F> {
        let n = self.perm.len();
        // A = P' L U, so A' y = c becomes U' v = c, L' w = v, y = P' w
        let mut v = Array1::<F>::zeros(n);
        for i in 0..n {
            let mut s = c[i];
            for k in 0..i {
                s = s - self.lu[[k, i]] * v[k];
            }
            v[i] = s / self.lu[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = v[i];
            for k in (i + 1)..n {
                s = s - self.lu[[k, i]] * v[k];
            }
            v[i] = s;
        }
        let mut y = Array1::<F>::zeros(n);
        for i in 0..n {
            y[self.perm[i]] = v[i];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cholesky_solves_spd() {
        let a: Array2<f64> = array![[4.0, 2.0, 0.6], [2.0, 5.0, 1.0], [0.6, 1.0, 3.0]];
        let b = array![1.0, -2.0, 0.5];
        let x = solve_spd(&a.view(), &b.view()).unwrap();
        let r = a.dot(&x) - &b;
        assert!(r.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(cholesky(&a.view()).is_none());
    }

    #[test]
    fn gram_solve_drops_exact_collinearity() {
        // third column = first + second
        let w: Array2<f64> = array![
            [1.0, 0.0, 1.0],
            [0.0, 1.0, 1.0],
            [1.0, 1.0, 2.0],
            [2.0, -1.0, 1.0]
        ];
        let g = w.t().dot(&w);
        let b = w.t().dot(&array![[1.0], [2.0], [3.0], [4.0]]);
        let gs = gram_solve_dropping(&g.view(), &b.view(), 1e-10);
        assert_eq!(gs.dropped.len(), 1);
        // fitted projection must be unaffected: residual orthogonal to W
        let fitted = w.dot(&gs.solution);
        let resid = &array![[1.0], [2.0], [3.0], [4.0]] - &fitted;
        let ortho = w.t().dot(&resid);
        assert!(ortho.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn lu_solves_both_orientations() {
        let a: Array2<f64> = array![[0.0, 2.0, 1.0], [1.0, -1.0, 0.5], [3.0, 0.0, -2.0]];
        let lu = lu_factor(&a.view()).unwrap();
        let b = array![1.0, 2.0, 3.0];
        let x = lu.solve(&b.view());
        let r = a.dot(&x) - &b;
        assert!(r.iter().all(|v| v.abs() < 1e-12));
        let y = lu.solve_transpose(&b.view());
        let rt = a.t().dot(&y) - &b;
        assert!(rt.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn lu_rejects_singular() {
        let a: Array2<f64> = array![[1.0, 2.0], [2.0, 4.0]];
        assert!(lu_factor(&a.view()).is_none());
    }

    #[test]
    fn gram_solve_well_posed_matches_cholesky() {
        let g: Array2<f64> = array![[4.0, 1.0], [1.0, 3.0]];
        let b = array![[1.0], [2.0]];
        let gs = gram_solve_dropping(&g.view(), &b.view(), 1e-12);
        assert!(gs.dropped.is_empty());
        let x = solve_spd(&g.view(), &b.column(0)).unwrap();
        assert!((gs.solution[[0, 0]] - x[0]).abs() < 1e-12);
        assert!((gs.solution[[1, 0]] - x[1]).abs() < 1e-12);
        assert!(gs.condition >= 1.0);
    }
}
