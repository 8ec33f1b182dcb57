//! Slow reference implementations used only by the test suites. Everything
//! here trades speed for being obviously correct.

#![doc(hidden)]

use crate::linalg;
use crate::qr::{check_loss_weighted, psi};
use ndarray::{Array1, Array2};

/// Exhaustive vertex search for weighted check-loss minimization: try every
/// subset of `d` observations, solve the interpolating system, keep the best
/// objective. Valid whenever an optimal vertex interpolates `d` rows, i.e.
/// for full-column-rank designs.
pub fn brute_force_qr(
    design: &Array2<f64>,
    response: &Array1<f64>,
    tau: f64,
    weights: Option<&Array1<f64>>,
) -> (Array1<f64>, f64) {
    let n = design.nrows();
    let d = design.ncols();
    let w = weights
        .cloned()
        .unwrap_or_else(|| Array1::ones(n));
    let mut best_obj = f64::INFINITY;
    let mut best = Array1::<f64>::zeros(d);
    let mut subset: Vec<usize> = (0..d).collect();
    loop {
        // try this subset
        let mut xb = Array2::<f64>::zeros((d, d));
        let mut yb = Array1::<f64>::zeros(d);
        for (r, &i) in subset.iter().enumerate() {
            xb.row_mut(r).assign(&design.row(i));
            yb[r] = response[i];
        }
        if let Some(lu) = linalg::lu_factor(&xb.view()) {
            let beta = lu.solve(&yb.view());
            let resid = response - &design.dot(&beta);
            let obj = check_loss_weighted(&resid.view(), tau, &w.view());
            if obj < best_obj {
                best_obj = obj;
                best = beta;
            }
        }
        // next d-combination of {0..n}
        let mut k = d;
        loop {
            if k == 0 {
                return (best, best_obj);
            }
            k -= 1;
            if subset[k] + 1 <= n - (d - k) {
                subset[k] += 1;
                for j in (k + 1)..d {
                    subset[j] = subset[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Optimality-certificate gap for a claimed check-loss minimizer: find
/// scores in [tau-1, tau] for the zero-residual rows making the weighted
/// design-score products vanish. Returns the smallest attainable infinity
/// norm. Solved exactly through the normal equations when the box
/// constraint is slack; projected gradient (warm-started from the clamped
/// exact solution) handles the box-active case.
pub fn certificate_gap(
    design: &Array2<f64>,
    residuals: &Array1<f64>,
    tau: f64,
    weights: Option<&Array1<f64>>,
    zero_tol: f64,
) -> f64 {
    let n = design.nrows();
    let d = design.ncols();
    let w = weights
        .cloned()
        .unwrap_or_else(|| Array1::ones(n));
    let zero_rows: Vec<usize> = (0..n).filter(|&i| residuals[i].abs() <= zero_tol).collect();
    let mut v = Array1::<f64>::zeros(d);
    for i in 0..n {
        if !zero_rows.contains(&i) {
            let s = w[i] * psi(residuals[i], tau);
            v = v + &(design.row(i).to_owned() * s);
        }
    }
    if zero_rows.is_empty() {
        return v.iter().fold(0.0, |m, x| m.max(x.abs()));
    }
    // columns of m: w_i * design row i for the zero rows
    let z = zero_rows.len();
    let mut m = Array2::<f64>::zeros((d, z));
    for (k, &i) in zero_rows.iter().enumerate() {
        m.column_mut(k).assign(&(design.row(i).to_owned() * w[i]));
    }
    let lo = tau - 1.0;
    let hi = tau;
    let gap_at = |a: &Array1<f64>| -> f64 {
        (&v + &m.dot(a)).iter().fold(0.0, |acc, x| acc.max(x.abs()))
    };

    // ignoring the box, the best scores solve (m'm) a = -m'v; when that
    // solution already lies in the box it is the exact answer
    let gram = m.t().dot(&m);
    let rhs = m.t().dot(&v).insert_axis(ndarray::Axis(1)) * -1.0;
    let gs = linalg::gram_solve_dropping(&gram.view(), &rhs.view(), 1e-12);
    let mut a = gs.solution.column(0).to_owned();
    let slack = 1e-9;
    if a.iter().all(|&x| (lo - slack..=hi + slack).contains(&x)) {
        a.mapv_inplace(|x| x.clamp(lo, hi));
        return gap_at(&a);
    }

    a.mapv_inplace(|x| x.clamp(lo, hi));
    let lip = 2.0 * m.iter().map(|x| x * x).sum::<f64>().max(1e-12);
    for _ in 0..50_000 {
        let g = m.t().dot(&(&v + &m.dot(&a))) * 2.0;
        let mut next = &a - &(g / lip);
        next.mapv_inplace(|x| x.clamp(lo, hi));
        let moved = (&next - &a).iter().map(|x| x.abs()).fold(0.0, f64::max);
        a = next;
        if moved < 1e-14 {
            break;
        }
    }
    gap_at(&a)
}

/// Two-stage grid search for a two-coefficient L1-penalized check-loss
/// problem over [-5,5]^2: coarse pass at step 0.01, then a fine pass at step
/// 0.001 in a window around the coarse minimum. The returned objective is an
/// upper bound on the true optimum; how tight depends on the objective's
/// Lipschitz constant and the fine step.
pub fn l1_grid_oracle(
    design: &Array2<f64>,
    response: &Array1<f64>,
    tau: f64,
    penalized: &[usize],
    lambda: f64,
) -> (f64, f64, f64) {
    assert_eq!(design.ncols(), 2);
    let objective = |b1: f64, b2: f64| -> f64 {
        let mut obj = 0.0;
        for i in 0..design.nrows() {
            let r = response[i] - design[[i, 0]] * b1 - design[[i, 1]] * b2;
            obj += r * (tau - if r < 0.0 { 1.0 } else { 0.0 });
        }
        for &j in penalized {
            obj += lambda * if j == 0 { b1.abs() } else { b2.abs() };
        }
        obj
    };
    let search = |c1: f64, c2: f64, half: f64, step: f64| -> (f64, f64, f64) {
        let k = (half / step).round() as i64;
        let mut best = (c1, c2, objective(c1, c2));
        for i in -k..=k {
            for j in -k..=k {
                let b1 = c1 + i as f64 * step;
                let b2 = c2 + j as f64 * step;
                let o = objective(b1, b2);
                if o < best.2 {
                    best = (b1, b2, o);
                }
            }
        }
        best
    };
    let coarse = search(0.0, 0.0, 5.0, 0.01);
    search(coarse.0, coarse.1, 0.05, 0.001)
}
