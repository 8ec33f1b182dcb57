//! Weighted check-loss minimization (linear quantile regression), with an
//! optional L1 penalty on a designated coefficient block.
//!
//! The minimization is solved through its box-constrained LP dual by an
//! interior point method, then polished to an exact vertex: a set of
//! observations is selected whose interpolation reproduces the optimum, so
//! the returned solution has exactly zero residuals on those rows. A dense
//! bounded-variable simplex serves as a fallback on small problems when the
//! interior point iteration stalls.

mod ipm;
mod simplex;

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Scalar;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

/// Quantile score function: `tau - 1` for negative arguments, `tau`
/// otherwise. The value at exactly zero is `tau` by convention, so rows
/// interpolated by a vertex solution get a deterministic score.
pub fn psi<F: Scalar>(u: F, tau: F) -> F {
    if u < F::zero() {
        tau - F::one()
    } else {
        tau
    }
}

/// Check loss `sum_i rho_tau(r_i)` with `rho_tau(u) = u (tau - I(u < 0))`.
pub fn check_loss<F: Scalar>(residuals: &ArrayView1<F>, tau: F) -> F {
    residuals.iter().map(|&r| r * psi(r, tau)).sum()
}

/// Weighted check loss `sum_i w_i rho_tau(r_i)`.
pub fn check_loss_weighted<F: Scalar>(
    residuals: &ArrayView1<F>,
    tau: F,
    weights: &ArrayView1<F>,
) -> F {
    residuals
        .iter()
        .zip(weights.iter())
        .map(|(&r, &w)| w * r * psi(r, tau))
        .sum()
}

/// L1 penalty on a coefficient subset.
#[derive(Debug, Clone, PartialEq)]
pub struct Penalty<F> {
    /// 0-based coefficient indices the penalty applies to.
    pub indices: Vec<usize>,
    pub lambda: F,
}

/// A weighted linear quantile regression problem.
#[derive(Debug, Clone)]
pub struct QrProblem<F> {
    pub design: Array2<F>,
    pub response: Array1<F>,
    pub tau: F,
    /// Positive observation weights; `None` means all ones.
    pub weights: Option<Array1<F>>,
    pub penalty: Option<Penalty<F>>,
}

impl<F: Scalar> QrProblem<F> {
    pub fn new(design: Array2<F>, response: Array1<F>, tau: F) -> Self {
        QrProblem {
            design,
            response,
            tau,
            weights: None,
            penalty: None,
        }
    }

    pub fn with_weights(mut self, weights: Array1<F>) -> Self {
        self.weights = Some(weights);
        self
    }

    pub fn with_penalty(mut self, indices: Vec<usize>, lambda: F) -> Self {
        self.penalty = Some(Penalty { indices, lambda });
        self
    }

    fn validate(&self) -> Result<()> {
        let n = self.design.nrows();
        let d = self.design.ncols();
        if n == 0 || d == 0 {
            return Err(Error::InvalidArgument(
                "empty design matrix in quantile regression problem".into(),
            ));
        }
        if self.response.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{n} design rows but {} responses",
                self.response.len()
            )));
        }
        let t = self.tau.to64();
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::InvalidTau(t));
        }
        if let Some(w) = &self.weights {
            if w.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "{n} design rows but {} weights",
                    w.len()
                )));
            }
            if w.iter().any(|v| !(*v > F::zero()) || !v.is_finite()) {
                return Err(Error::InvalidArgument(
                    "observation weights must be positive and finite".into(),
                ));
            }
        }
        if self.design.iter().any(|v| !v.is_finite())
            || self.response.iter().any(|v| !v.is_finite())
        {
            return Err(Error::InvalidArgument(
                "non-finite value in design or response".into(),
            ));
        }
        Ok(())
    }
}

/// How the solver terminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    /// Certified unique vertex optimum.
    Optimal,
    /// Iteration cap reached; best iterate returned.
    MaxIter,
    /// A valid minimizer, but the optimum is not unique (rank-deficient
    /// design or an optimal face rather than a point).
    Degenerate,
}

#[derive(Debug, Clone)]
pub struct QrSolution<F> {
    pub coefficients: Array1<F>,
    /// Weighted check loss plus any penalty term, recomputed from the
    /// returned coefficients.
    pub objective: F,
    pub residuals: Array1<F>,
    pub status: SolveStatus,
    /// Rows interpolated exactly by the returned vertex (empty when the
    /// solution could not be polished to a vertex).
    pub basis_rows: Vec<usize>,
}

/// Minimize the weighted check loss. Delegates to [`solve_l1`] when the
/// problem carries a penalty.
pub fn solve<F: Scalar>(problem: &QrProblem<F>) -> Result<QrSolution<F>> {
    if problem.penalty.is_some() {
        return solve_l1(problem);
    }
    problem.validate()?;
    let weights = problem
        .weights
        .clone()
        .unwrap_or_else(|| Array1::ones(problem.design.nrows()));
    solve_core(
        &problem.design.view(),
        &problem.response.view(),
        problem.tau,
        &weights,
    )
}

/// Minimize weighted check loss plus `lambda * sum_{j in P} |b_j|`. The
/// penalty is encoded as two pseudo-observations per penalized coefficient:
/// rows `+e_j` and `-e_j` with response 0 and weight `lambda`, whose check
/// losses sum to `lambda |b_j|` at any quantile level.
pub fn solve_l1<F: Scalar>(problem: &QrProblem<F>) -> Result<QrSolution<F>> {
    let penalty = problem
        .penalty
        .clone()
        .ok_or_else(|| Error::InvalidArgument("solve_l1 needs a penalty".into()))?;
    if penalty.indices.is_empty() {
        return Err(Error::InvalidArgument(
            "penalty index set must be non-empty".into(),
        ));
    }
    let d = problem.design.ncols();
    if penalty.indices.iter().any(|&j| j >= d) {
        return Err(Error::InvalidArgument(format!(
            "penalty index out of range for {d} coefficients"
        )));
    }
    if penalty.lambda < F::zero() {
        return Err(Error::InvalidArgument(
            "penalty weight must be non-negative".into(),
        ));
    }
    let mut bare = problem.clone();
    bare.penalty = None;
    bare.validate()?;
    if penalty.lambda == F::zero() {
        return solve(&bare);
    }

    let n = problem.design.nrows();
    let extra = 2 * penalty.indices.len();
    let mut design = Array2::<F>::zeros((n + extra, d));
    design
        .slice_mut(ndarray::s![..n, ..])
        .assign(&problem.design);
    let mut response = Array1::<F>::zeros(n + extra);
    response
        .slice_mut(ndarray::s![..n])
        .assign(&problem.response);
    let mut weights = Array1::<F>::ones(n + extra);
    if let Some(w) = &problem.weights {
        weights.slice_mut(ndarray::s![..n]).assign(w);
    }
    for (k, &j) in penalty.indices.iter().enumerate() {
        let r1 = n + 2 * k;
        let r2 = n + 2 * k + 1;
        design[[r1, j]] = F::one();
        design[[r2, j]] = -F::one();
        weights[r1] = penalty.lambda;
        weights[r2] = penalty.lambda;
    }

    let aug = solve_core(&design.view(), &response.view(), problem.tau, &weights)?;
    let residuals = aug.residuals.slice(ndarray::s![..n]).to_owned();
    let w_orig = problem
        .weights
        .clone()
        .unwrap_or_else(|| Array1::ones(n));
    let mut objective = check_loss_weighted(&residuals.view(), problem.tau, &w_orig.view());
    for &j in &penalty.indices {
        objective += penalty.lambda * aug.coefficients[j].abs();
    }
    Ok(QrSolution {
        coefficients: aug.coefficients,
        objective,
        residuals,
        status: aug.status,
        basis_rows: aug.basis_rows.into_iter().filter(|&i| i < n).collect(),
    })
}

fn solve_core<F: Scalar>(
    design: &ArrayView2<F>,
    response: &ArrayView1<F>,
    tau: F,
    weights: &Array1<F>,
) -> Result<QrSolution<F>> {
    let n = design.nrows();
    let d = design.ncols();
    let one = F::one();

    // LP data: columns of `a` are the weighted design rows, `c` the
    // weighted responses, rescaled to unit size for the interior point run.
    let mut a = Array2::<F>::zeros((d, n));
    for i in 0..n {
        for k in 0..d {
            a[[k, i]] = weights[i] * design[[i, k]];
        }
    }
    let c_raw = Array1::from_shape_fn(n, |i| weights[i] * response[i]);
    let gamma = one.max(c_raw.iter().fold(F::zero(), |m, v| m.max(v.abs())));
    let c = c_raw.mapv(|v| v / gamma);

    let ipm = ipm::solve_box_lp(&a, &c, tau);
    let beta_ipm = ipm.y.mapv(|v| v * gamma);
    let resid_ipm = response - &design.dot(&beta_ipm);
    let obj_ipm = check_loss_weighted(&resid_ipm.view(), tau, &weights.view());

    // polish to a vertex: interpolate the rows the dual marks as basic
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        resid_ipm[i]
            .abs()
            .partial_cmp(&resid_ipm[j].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let basis = greedy_independent_rows(design, &order);
    let mut best: Option<(Array1<F>, F, Vec<usize>)> = None;
    if !basis.is_empty() {
        if let Some(beta) = interpolate_rows(design, response, &basis) {
            let mut r = response - &design.dot(&beta);
            for &i in &basis {
                r[i] = F::zero();
            }
            let obj = check_loss_weighted(&r.view(), tau, &weights.view());
            if obj <= obj_ipm + F::cast(1e-9) * (one + obj_ipm.abs()) {
                best = Some((beta, obj, basis.clone()));
            }
        }
    }

    // fallback for small problems when the interior point answer is shaky
    if (best.is_none() || !ipm.converged) && n <= 200 {
        if let Some(out) = simplex::solve_box_lp_simplex(&a, &c, tau) {
            if let Some(beta) = interpolate_rows(design, response, &out.basis_rows) {
                let mut r = response - &design.dot(&beta);
                for &i in &out.basis_rows {
                    r[i] = F::zero();
                }
                let obj = check_loss_weighted(&r.view(), tau, &weights.view());
                let better = match &best {
                    Some((_, cur, _)) => obj < *cur - F::cast(1e-12) * (one + cur.abs()),
                    None => obj <= obj_ipm + F::cast(1e-9) * (one + obj_ipm.abs()),
                };
                if better {
                    best = Some((beta, obj, out.basis_rows));
                }
            }
        }
    }

    match best {
        Some((beta, obj, basis)) => {
            let mut residuals = response - &design.dot(&beta);
            for &i in &basis {
                residuals[i] = F::zero();
            }
            let status = certify(design, &residuals, tau, weights, &basis, d);
            Ok(QrSolution {
                coefficients: beta,
                objective: obj,
                residuals,
                status,
                basis_rows: basis,
            })
        }
        None => Ok(QrSolution {
            coefficients: beta_ipm,
            objective: obj_ipm,
            residuals: resid_ipm,
            status: if ipm.converged {
                SolveStatus::Optimal
            } else {
                SolveStatus::MaxIter
            },
            basis_rows: Vec::new(),
        }),
    }
}

/// Greedily pick linearly independent design rows following `order`, up to
/// the column count. Modified Gram-Schmidt with a second orthogonalization
/// pass; rows whose remainder falls below sqrt(eps) of their norm are
/// treated as dependent.
fn greedy_independent_rows<F: Scalar>(design: &ArrayView2<F>, order: &[usize]) -> Vec<usize> {
    let d = design.ncols();
    let rel = F::cast(F::epsilon().to64().sqrt());
    let mut ortho: Vec<Array1<F>> = Vec::new();
    let mut rows = Vec::new();
    for &i in order {
        if rows.len() == d {
            break;
        }
        let r0 = design.row(i).to_owned();
        let norm0 = r0.dot(&r0).sqrt();
        if !(norm0 > F::zero()) {
            continue;
        }
        let mut v = r0;
        for _ in 0..2 {
            for q in &ortho {
                let proj = v.dot(q);
                v = v - &q.mapv(|x| x * proj);
            }
        }
        let norm = v.dot(&v).sqrt();
        if norm > rel * norm0 {
            rows.push(i);
            ortho.push(v.mapv(|x| x / norm));
        }
    }
    rows
}

/// Coefficients interpolating the selected rows. Uses LU when the system is
/// square, otherwise a rank-revealing normal-equations solve that fixes
/// dropped coordinates at zero.
fn interpolate_rows<F: Scalar>(
    design: &ArrayView2<F>,
    response: &ArrayView1<F>,
    rows: &[usize],
) -> Option<Array1<F>> {
    let d = design.ncols();
    let r = rows.len();
    if r == 0 {
        return None;
    }
    let mut xb = Array2::<F>::zeros((r, d));
    let mut yb = Array1::<F>::zeros(r);
    for (k, &i) in rows.iter().enumerate() {
        xb.row_mut(k).assign(&design.row(i));
        yb[k] = response[i];
    }
    if r == d {
        if let Some(lu) = linalg::lu_factor(&xb.view()) {
            return Some(lu.solve(&yb.view()));
        }
    }
    let g = xb.t().dot(&xb);
    let rhs = xb.t().dot(&yb).insert_axis(ndarray::Axis(1));
    let gs = linalg::gram_solve_dropping(&g.view(), &rhs.view(), 1e-12);
    Some(gs.solution.column(0).to_owned())
}

/// Status of a polished vertex: solve for the interpolated rows' dual
/// scores and check the stationarity condition. Scores strictly inside
/// (tau-1, tau) certify a unique optimum; scores at the boundary mean the
/// optimal set is a face, and an unsolvable or infeasible score system
/// means the vertex is not strictly complementary.
fn certify<F: Scalar>(
    design: &ArrayView2<F>,
    residuals: &Array1<F>,
    tau: F,
    weights: &Array1<F>,
    basis: &[usize],
    full_dim: usize,
) -> SolveStatus {
    if basis.len() < full_dim {
        return SolveStatus::Degenerate;
    }
    let d = design.ncols();
    let r = basis.len();
    let mut v = Array1::<F>::zeros(d);
    let in_basis: std::collections::HashSet<usize> = basis.iter().copied().collect();
    for i in 0..design.nrows() {
        if !in_basis.contains(&i) {
            let s = weights[i] * psi(residuals[i], tau);
            for k in 0..d {
                v[k] += s * design[[i, k]];
            }
        }
    }
    // solve X_B' a = -v in the least squares sense
    let mut xb = Array2::<F>::zeros((r, d));
    for (k, &i) in basis.iter().enumerate() {
        xb.row_mut(k).assign(&design.row(i));
    }
    let g = xb.dot(&xb.t());
    let rhs = xb.dot(&v).mapv(|x| -x).insert_axis(ndarray::Axis(1));
    let gs = linalg::gram_solve_dropping(&g.view(), &rhs.view(), 1e-12);
    let aw = gs.solution.column(0).to_owned();
    let gap = &xb.t().dot(&aw) + &v;
    let vscale = F::one() + v.iter().fold(F::zero(), |m, x| m.max(x.abs()));
    if gap.iter().any(|x| x.abs() > F::cast(1e-6) * vscale) {
        return SolveStatus::Degenerate;
    }
    let btol = F::cast(10.0 * F::epsilon().to64().sqrt());
    for (k, &i) in basis.iter().enumerate() {
        let score = aw[k] / weights[i];
        if score < tau - F::one() + btol || score > tau - btol {
            return SolveStatus::Degenerate;
        }
    }
    SolveStatus::Optimal
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn psi_convention() {
        assert_abs_diff_eq!(psi(-0.1, 0.25), -0.75);
        assert_abs_diff_eq!(psi(0.1, 0.25), 0.25);
        assert_abs_diff_eq!(psi(0.0, 0.5), 0.5);
    }

    #[test]
    fn check_loss_values() {
        let r = array![1.0, -1.0];
        assert_abs_diff_eq!(check_loss(&r.view(), 0.5), 1.0);
        assert_abs_diff_eq!(check_loss(&r.view(), 0.25), 1.0);
        let z = array![0.0, 0.0, 0.0];
        assert_abs_diff_eq!(check_loss(&z.view(), 0.3), 0.0);
    }

    fn intercept_problem(y: &[f64], tau: f64) -> QrProblem<f64> {
        let n = y.len();
        QrProblem::new(
            Array2::ones((n, 1)),
            Array1::from_vec(y.to_vec()),
            tau,
        )
    }

    #[test]
    fn median_of_three() {
        let sol = solve(&intercept_problem(&[1.0, 2.0, 9.0], 0.5)).unwrap();
        assert_abs_diff_eq!(sol.coefficients[0], 2.0, epsilon = 1e-9);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_eq!(sol.basis_rows, vec![1]);
        assert_abs_diff_eq!(sol.residuals[1], 0.0);
    }

    #[test]
    fn exact_interpolation_of_two_points() {
        let design = array![[1.0, 0.0], [1.0, 1.0]];
        let y = array![1.0, 3.0];
        for tau in [0.1f64, 0.5, 0.9] {
            let sol = solve(&QrProblem::new(design.clone(), y.clone(), tau)).unwrap();
            assert_abs_diff_eq!(sol.coefficients[0], 1.0, epsilon = 1e-8);
            assert_abs_diff_eq!(sol.coefficients[1], 2.0, epsilon = 1e-8);
            assert!(sol.objective.abs() < 1e-10);
        }
    }

    #[test]
    fn upper_quartile_of_five() {
        let sol = solve(&intercept_problem(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.75)).unwrap();
        assert_abs_diff_eq!(sol.coefficients[0], 4.0, epsilon = 1e-9);
    }

    #[test]
    fn even_sample_median_is_degenerate() {
        let sol = solve(&intercept_problem(&[1.0, 2.0, 3.0, 4.0], 0.5)).unwrap();
        assert_eq!(sol.status, SolveStatus::Degenerate);
        assert_abs_diff_eq!(sol.objective, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn matches_brute_force_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for case in 0..200 {
            let n = rng.gen_range(3..=12);
            let d = rng.gen_range(1..=3.min(n));
            let design = Array2::from_shape_fn((n, d), |(i, k)| {
                if k == 0 {
                    1.0
                } else {
                    rng.gen::<f64>() * 4.0 - 2.0 + (i as f64) * 0.01
                }
            });
            let y = Array1::from_shape_fn(n, |_| rng.gen::<f64>() * 10.0 - 5.0);
            let tau = [0.1, 0.25, 0.5, 0.75, 0.9][case % 5];
            let weights = if case % 3 == 0 {
                Some(Array1::from_shape_fn(n, |_| rng.gen::<f64>() * 1.5 + 0.5))
            } else {
                None
            };
            let (oracle_beta, oracle_obj) =
                testutil::brute_force_qr(&design, &y, tau, weights.as_ref());
            let mut problem = QrProblem::new(design.clone(), y.clone(), tau);
            if let Some(w) = weights.clone() {
                problem = problem.with_weights(w);
            }
            let sol = solve(&problem).unwrap();
            assert!(
                (sol.objective - oracle_obj).abs() <= 1e-8,
                "case {case}: solver {} vs oracle {} (beta {:?} vs {:?})",
                sol.objective,
                oracle_obj,
                sol.coefficients,
                oracle_beta
            );
            // vertex property: no more zero residuals than parameters
            let zeros = sol.residuals.iter().filter(|r| **r == 0.0).count();
            assert!(zeros <= d);
        }
    }

    #[test]
    fn simplex_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for case in 0..50 {
            let n = rng.gen_range(3..=10);
            let d = rng.gen_range(1..=2.min(n));
            let design = Array2::from_shape_fn((n, d), |(_, k)| {
                if k == 0 {
                    1.0
                } else {
                    rng.gen::<f64>() * 2.0 - 1.0
                }
            });
            let y = Array1::from_shape_fn(n, |_| rng.gen::<f64>() * 6.0 - 3.0);
            let tau = [0.2, 0.5, 0.8][case % 3];
            let (_, oracle_obj) = testutil::brute_force_qr(&design, &y, tau, None);

            let mut a = Array2::<f64>::zeros((d, n));
            for i in 0..n {
                for k in 0..d {
                    a[[k, i]] = design[[i, k]];
                }
            }
            let out = simplex::solve_box_lp_simplex(&a, &y, tau).expect("simplex finishes");
            let beta = interpolate_rows(&design.view(), &y.view(), &out.basis_rows)
                .expect("basis interpolates");
            let resid = &y - &design.dot(&beta);
            let obj = check_loss(&resid.view(), tau);
            assert!(
                (obj - oracle_obj).abs() <= 1e-8,
                "case {case}: simplex {obj} vs oracle {oracle_obj}"
            );
        }
    }

    #[test]
    fn certificate_holds_at_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = 30;
            let d = 3;
            let design = Array2::from_shape_fn((n, d), |(_, k)| {
                if k == 0 {
                    1.0
                } else {
                    rng.gen::<f64>() * 2.0 - 1.0
                }
            });
            let y = Array1::from_shape_fn(n, |_| rng.gen::<f64>() * 4.0 - 2.0);
            let sol = solve(&QrProblem::new(design.clone(), y.clone(), 0.3)).unwrap();
            let gap = testutil::certificate_gap(&design, &sol.residuals, 0.3, None, 0.0);
            assert!(gap <= 1e-6, "certificate gap {gap}");
        }
    }

    #[test]
    fn scaling_the_response_scales_the_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 25;
        let design = Array2::from_shape_fn((n, 2), |(_, k)| {
            if k == 0 {
                1.0
            } else {
                rng.gen::<f64>()
            }
        });
        let y = Array1::from_shape_fn(n, |_| rng.gen::<f64>() * 3.0);
        let base = solve(&QrProblem::new(design.clone(), y.clone(), 0.4)).unwrap();
        let scaled = solve(&QrProblem::new(design.clone(), y.mapv(|v| v * 7.0), 0.4)).unwrap();
        for k in 0..2 {
            assert_abs_diff_eq!(
                scaled.coefficients[k],
                7.0 * base.coefficients[k],
                epsilon = 1e-8 * (1.0 + base.coefficients[k].abs() * 7.0)
            );
        }
        assert_abs_diff_eq!(
            scaled.objective,
            7.0 * base.objective,
            epsilon = 1e-8 * (1.0 + 7.0 * base.objective)
        );
    }

    #[test]
    fn intercept_solution_monotone_in_tau() {
        let y = [3.1, -0.4, 2.2, 5.9, 1.0, 0.3, 4.4, -1.2, 2.8, 3.3];
        let mut prev = f64::NEG_INFINITY;
        for k in 1..10 {
            let tau = k as f64 / 10.0;
            let sol = solve(&intercept_problem(&y, tau)).unwrap();
            assert!(
                sol.coefficients[0] >= prev - 1e-10,
                "tau {tau}: {} < {prev}",
                sol.coefficients[0]
            );
            prev = sol.coefficients[0];
        }
    }

    #[test]
    fn l1_zero_lambda_reduces_to_plain_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let design = Array2::from_shape_fn((15, 2), |(_, k)| {
            if k == 0 {
                1.0
            } else {
                rng.gen::<f64>()
            }
        });
        let y = Array1::from_shape_fn(15, |_| rng.gen::<f64>());
        let plain = solve(&QrProblem::new(design.clone(), y.clone(), 0.5)).unwrap();
        let pen = solve_l1(
            &QrProblem::new(design.clone(), y.clone(), 0.5).with_penalty(vec![1], 0.0),
        )
        .unwrap();
        assert_eq!(plain.coefficients, pen.coefficients);
        assert_eq!(plain.objective, pen.objective);
    }

    #[test]
    fn l1_dominating_lambda_kills_penalized_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 20;
        let design = Array2::from_shape_fn((n, 2), |(_, k)| {
            if k == 0 {
                1.0
            } else {
                rng.gen::<f64>() * 2.0
            }
        });
        let y = Array1::from_shape_fn(n, |_| rng.gen::<f64>() * 4.0 - 1.0);
        let ymax = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let lambda = 10.0 * n as f64 * ymax;
        let sol = solve_l1(
            &QrProblem::new(design, y, 0.5).with_penalty(vec![1], lambda),
        )
        .unwrap();
        assert!(sol.coefficients[1].abs() < 1e-6);
    }

    #[test]
    fn l1_matches_grid_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let n = 8;
        let design = Array2::from_shape_fn((n, 2), |(_, k)| {
            if k == 0 {
                1.0
            } else {
                rng.gen::<f64>() * 2.0 - 1.0
            }
        });
        let y = Array1::from_shape_fn(n, |_| rng.gen::<f64>() * 4.0 - 2.0);
        let (b1, b2, grid_obj) = testutil::l1_grid_oracle(&design, &y, 0.5, &[1], 1.0);
        let sol = solve_l1(
            &QrProblem::new(design.clone(), y.clone(), 0.5).with_penalty(vec![1], 1.0),
        )
        .unwrap();
        // the solver is exact, so it can only undercut the grid; the grid in
        // turn overshoots by at most a Lipschitz constant times its step
        assert!(sol.objective <= grid_obj + 1e-10);
        let lipschitz: f64 = (0..n)
            .map(|i| 0.5 * (design[[i, 0]].powi(2) + design[[i, 1]].powi(2)).sqrt())
            .sum::<f64>()
            + 1.0;
        assert!(grid_obj - sol.objective <= lipschitz * 1.5e-3);
        assert!((sol.coefficients[0] - b1).abs() <= 5e-3);
        assert!((sol.coefficients[1] - b2).abs() <= 5e-3);

        // exact cross-check: the penalty rows make an ordinary problem the
        // subset-enumeration oracle can solve
        let mut aug_design = Array2::<f64>::zeros((n + 2, 2));
        aug_design.slice_mut(ndarray::s![..n, ..]).assign(&design);
        aug_design[[n, 1]] = 1.0;
        aug_design[[n + 1, 1]] = -1.0;
        let mut aug_y = Array1::<f64>::zeros(n + 2);
        aug_y.slice_mut(ndarray::s![..n]).assign(&y);
        let mut aug_w = Array1::<f64>::ones(n + 2);
        aug_w[n] = 1.0;
        aug_w[n + 1] = 1.0;
        let (_, exact_obj) = testutil::brute_force_qr(&aug_design, &aug_y, 0.5, Some(&aug_w));
        assert!(
            (sol.objective - exact_obj).abs() <= 1e-8,
            "solver {} vs exact {exact_obj}",
            sol.objective
        );
    }

    #[test]
    fn rejects_invalid_inputs() {
        let p = QrProblem::new(Array2::<f64>::ones((3, 1)), Array1::zeros(3), 1.2);
        assert!(matches!(solve(&p), Err(Error::InvalidTau(_))));
        let p = QrProblem::new(Array2::<f64>::ones((3, 1)), Array1::zeros(2), 0.5);
        assert!(solve(&p).is_err());
        let p = QrProblem::new(Array2::<f64>::ones((3, 1)), Array1::zeros(3), 0.5)
            .with_weights(array![1.0, -1.0, 1.0]);
        assert!(solve(&p).is_err());
    }

    #[test]
    fn objective_recomputes_from_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let design = Array2::from_shape_fn((40, 3), |(_, k)| {
            if k == 0 {
                1.0
            } else {
                rng.gen::<f64>() * 2.0 - 1.0
            }
        });
        let y = Array1::from_shape_fn(40, |_| rng.gen::<f64>() * 5.0);
        let w = Array1::from_shape_fn(40, |_| rng.gen::<f64>() + 0.5);
        let sol = solve(
            &QrProblem::new(design.clone(), y.clone(), 0.65).with_weights(w.clone()),
        )
        .unwrap();
        let resid = &y - &design.dot(&sol.coefficients);
        let obj = check_loss_weighted(&resid.view(), 0.65, &w.view());
        assert!(
            (obj - sol.objective).abs() <= 1e-10 * (1.0 + obj.abs()),
            "{obj} vs {}",
            sol.objective
        );
    }
}
