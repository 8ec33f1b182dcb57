//! Predictor-corrector interior point method for the box-constrained LP
//! dual of weighted check-loss minimization:
//!
//! ```text
//!     min  c'x   s.t.  A x = tau * A 1,   0 <= x <= 1
//! ```
//!
//! where `A` is the weighted design transposed (one column per observation)
//! and `c` the weighted responses. The multipliers of the equality
//! constraints at the optimum are the regression coefficients, and the
//! components of `x` strictly inside (0,1) mark zero-residual observations.

use crate::linalg;
use crate::scalar::Scalar;
use ndarray::{Array1, Array2};

pub(super) struct IpmOutcome<F> {
    /// Equality multipliers: the coefficient estimate.
    pub y: Array1<F>,
    pub converged: bool,
}

const MAX_ITER: usize = 80;

pub(super) fn solve_box_lp<F: Scalar>(a: &Array2<F>, c: &Array1<F>, tau: F) -> IpmOutcome<F> {
    let d = a.nrows();
    let n = a.ncols();
    let one = F::one();
    let two_n = F::usize(2 * n);

    let b: Array1<F> = a.sum_axis(ndarray::Axis(1)) * tau;
    let b_norm = one + b.iter().fold(F::zero(), |m, v| m.max(v.abs()));
    let c_norm = one + c.iter().fold(F::zero(), |m, v| m.max(v.abs()));

    let eps = F::epsilon().to64();
    let tol_mu = F::cast(eps.powf(0.75));
    let tol_feas = F::cast(eps.powf(0.6));

    // strictly feasible start for the equality constraints
    let mut x = Array1::<F>::from_elem(n, tau);
    let mut s = Array1::<F>::from_elem(n, one - tau);
    let mut y = Array1::<F>::zeros(d);
    let c0 = one + c.iter().map(|v| v.abs()).sum::<F>() / F::usize(n);
    let mut z = c.mapv(|v| v.max(F::zero()) + c0);
    let mut w = c.mapv(|v| (-v).max(F::zero()) + c0);

    let mut converged = false;
    for _ in 0..MAX_ITER {
        let r_p = &b - &a.dot(&x);
        let r_u = {
            let mut r = Array1::<F>::from_elem(n, one);
            r = r - &x - &s;
            r
        };
        let r_d = c - &a.t().dot(&y) - &z + &w;
        let mu = (x.dot(&z) + s.dot(&w)) / two_n;

        let rp_inf = r_p.iter().fold(F::zero(), |m, v| m.max(v.abs()));
        let rd_inf = r_d.iter().fold(F::zero(), |m, v| m.max(v.abs()));
        if mu <= tol_mu * c_norm && rp_inf <= tol_feas * b_norm && rd_inf <= tol_feas * c_norm {
            converged = true;
            break;
        }

        // diagonal of the condensed system
        let theta = Array1::from_shape_fn(n, |i| z[i] / x[i] + w[i] / s[i]);
        let theta_inv = theta.mapv(|v| one / v);

        // normal matrix M = A diag(1/theta) A'
        let a_scaled = {
            let mut m = a.clone();
            for (j, mut col) in m.axis_iter_mut(ndarray::Axis(1)).enumerate() {
                col.mapv_inplace(|v| v * theta_inv[j]);
            }
            m
        };
        let m = a_scaled.dot(&a.t());
        let chol = match factor_with_ridge(&m) {
            Some(l) => l,
            None => break,
        };

        let solve_step = |q_xz: &Array1<F>, q_sw: &Array1<F>| {
            // g = r_d - q_xz/x + q_sw/s - (w/s) r_u
            let g = Array1::from_shape_fn(n, |i| {
                r_d[i] - q_xz[i] / x[i] + q_sw[i] / s[i] - w[i] / s[i] * r_u[i]
            });
            let rhs = &r_p + &a.dot(&(&theta_inv * &g));
            let dy = linalg::cholesky_solve(&chol, &rhs.view());
            let aty = a.t().dot(&dy);
            let dx = Array1::from_shape_fn(n, |i| theta_inv[i] * (aty[i] - g[i]));
            let ds = &r_u - &dx;
            let dz = Array1::from_shape_fn(n, |i| (q_xz[i] - z[i] * dx[i]) / x[i]);
            let dw = Array1::from_shape_fn(n, |i| (q_sw[i] - w[i] * ds[i]) / s[i]);
            (dx, ds, dy, dz, dw)
        };

        // affine predictor
        let q_xz_aff = Array1::from_shape_fn(n, |i| -x[i] * z[i]);
        let q_sw_aff = Array1::from_shape_fn(n, |i| -s[i] * w[i]);
        let (dx_a, ds_a, _dy_a, dz_a, dw_a) = solve_step(&q_xz_aff, &q_sw_aff);
        let ap = step_limit(&x, &dx_a).min(step_limit(&s, &ds_a)).min(one);
        let ad = step_limit(&z, &dz_a).min(step_limit(&w, &dw_a)).min(one);
        let mu_aff = {
            let mut acc = F::zero();
            for i in 0..n {
                acc += (x[i] + ap * dx_a[i]) * (z[i] + ad * dz_a[i]);
                acc += (s[i] + ap * ds_a[i]) * (w[i] + ad * dw_a[i]);
            }
            acc / two_n
        };
        let sigma = {
            let ratio = (mu_aff / mu).max(F::zero()).min(one);
            ratio * ratio * ratio
        };

        // corrector
        let sm = sigma * mu;
        let q_xz = Array1::from_shape_fn(n, |i| sm - x[i] * z[i] - dx_a[i] * dz_a[i]);
        let q_sw = Array1::from_shape_fn(n, |i| sm - s[i] * w[i] - ds_a[i] * dw_a[i]);
        let (dx, ds, dy, dz, dw) = solve_step(&q_xz, &q_sw);

        let frac = F::cast(0.99995);
        let ap = (frac * step_limit(&x, &dx).min(step_limit(&s, &ds))).min(one);
        let ad = (frac * step_limit(&z, &dz).min(step_limit(&w, &dw))).min(one);
        x = &x + &(dx * ap);
        s = &s + &(ds * ap);
        y = &y + &(dy * ad);
        z = &z + &(dz * ad);
        w = &w + &(dw * ad);
    }

    IpmOutcome { y, converged }
}

/// Largest alpha with v + alpha dv >= 0.
fn step_limit<F: Scalar>(v: &Array1<F>, dv: &Array1<F>) -> F {
    let mut alpha = F::infinity();
    for i in 0..v.len() {
        if dv[i] < F::zero() {
            let cand = -v[i] / dv[i];
            if cand < alpha {
                alpha = cand;
            }
        }
    }
    alpha
}

/// Cholesky with an escalating ridge for (near-)singular normal matrices,
/// which arise when the design is rank deficient or underdetermined.
fn factor_with_ridge<F: Scalar>(m: &Array2<F>) -> Option<Array2<F>> {
    if let Some(l) = linalg::cholesky(&m.view()) {
        return Some(l);
    }
    let d = m.nrows();
    let trace = (0..d).map(|i| m[[i, i]]).sum::<F>();
    let mut ridge = (trace / F::usize(d) + F::one()) * F::cast(1e-12);
    for _ in 0..6 {
        let mut shifted = m.clone();
        for i in 0..d {
            shifted[[i, i]] += ridge;
        }
        if let Some(l) = linalg::cholesky(&shifted.view()) {
            return Some(l);
        }
        ridge = ridge * F::cast(100.0);
    }
    None
}
