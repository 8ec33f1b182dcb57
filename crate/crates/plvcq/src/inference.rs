//! Hypothesis tests on the fitted model: a Wald test with a sandwich
//! covariance for the constant coefficients, rank score tests for constant
//! coefficients (empirical or exchangeable working score covariance), and
//! the rank score test that designated varying coefficients are in fact
//! time-invariant.
//!
//! All of them residualize the tested design block against the nuisance
//! block under a diagonal weight matrix, then work with residual sign
//! scores; none needs an N-by-N matrix.

use std::collections::BTreeMap;

use crate::data::LongitudinalDataset;
use crate::density::{self, WeightMode};
use crate::dist;
use crate::error::{Error, Result};
use crate::fit;
use crate::linalg;
use crate::qr::{self, QrProblem};
use crate::scalar::Scalar;
use crate::spline::{self, SplineSpec};
use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Wald,
    Qrs,
    QrsDelta,
}

/// Working model for the within-subject covariance of the sign scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correlation {
    Empirical,
    Exchangeable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestResult {
    pub method: TestMethod,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Diagnostics: delta estimate, normal-approximation statistic,
    /// collinearity drops, condition numbers, density floor count.
    pub aux: BTreeMap<String, f64>,
}

/// A test block projected to be weighted-orthogonal to the nuisance block.
#[derive(Debug, Clone)]
pub struct ResidualizedDesign<F> {
    pub d: Array2<F>,
    /// Nuisance columns dropped as exactly collinear.
    pub dropped: Vec<usize>,
    /// Condition estimate of the retained nuisance Gram matrix.
    pub condition: f64,
}

/// Project `test_block` onto the weighted orthogonal complement of the
/// nuisance span: `D = (I - W (W'BW)^-1 W'B) T`, via a weighted
/// least-squares solve. Exactly collinear nuisance columns are dropped.
pub fn residualize<F: Scalar>(
    test_block: &ArrayView2<F>,
    nuisance: &ArrayView2<F>,
    b_diag: &ArrayView1<F>,
) -> Result<ResidualizedDesign<F>> {
    let n = test_block.nrows();
    if nuisance.nrows() != n || b_diag.len() != n {
        return Err(Error::InvalidArgument(
            "residualize: row counts disagree".into(),
        ));
    }
    let mut bw = nuisance.to_owned();
    for (mut row, &b) in bw.rows_mut().into_iter().zip(b_diag.iter()) {
        row.mapv_inplace(|v| v * b);
    }
    let gram = nuisance.t().dot(&bw);
    let rhs = bw.t().dot(test_block);
    let gs = linalg::gram_solve_dropping(&gram.view(), &rhs.view(), 1e-10);
    if gs.dropped.len() == nuisance.ncols() {
        return Err(Error::IllConditioned {
            what: "nuisance block in residualization".into(),
            cond: f64::INFINITY,
        });
    }
    let d = test_block - &nuisance.dot(&gs.solution);
    Ok(ResidualizedDesign {
        d,
        dropped: gs.dropped,
        condition: gs.condition,
    })
}

/// Fraction of ordered within-subject residual pairs with both residuals
/// negative. `counts` gives the per-subject observation counts in row
/// order.
pub fn estimate_delta<F: Scalar>(residuals: &ArrayView1<F>, counts: &[usize]) -> Result<F> {
    let mut pairs = 0usize;
    let mut both_neg = 0usize;
    let mut offset = 0usize;
    for &m in counts {
        let neg = residuals
            .slice(ndarray::s![offset..offset + m])
            .iter()
            .filter(|r| **r < F::zero())
            .count();
        pairs += m * (m - 1);
        both_neg += neg * (neg.saturating_sub(1));
        offset += m;
    }
    if pairs == 0 {
        return Err(Error::NoPairs);
    }
    Ok(F::usize(both_neg) / F::usize(pairs))
}

/// Per-subject score sums `sum_i (D_i' psi_i)(D_i' psi_i)'`.
pub(crate) fn score_outer<F: Scalar>(
    d: &Array2<F>,
    psi: &Array1<F>,
    counts: &[usize],
) -> Array2<F> {
    let k = d.ncols();
    let mut m = Array2::<F>::zeros((k, k));
    let mut offset = 0usize;
    for &mi in counts {
        let di = d.slice(ndarray::s![offset..offset + mi, ..]);
        let pi = psi.slice(ndarray::s![offset..offset + mi]);
        let u = di.t().dot(&pi);
        for a in 0..k {
            for b in 0..k {
                m[[a, b]] += u[a] * u[b];
            }
        }
        offset += mi;
    }
    m
}

/// Per-subject working score covariance under an exchangeable model:
/// `sum_i D_i' A D_i` with `A = (tau - delta) I + (delta - tau^2) J`.
pub(crate) fn score_exchangeable<F: Scalar>(
    d: &Array2<F>,
    counts: &[usize],
    tau: F,
    delta: F,
) -> Array2<F> {
    let k = d.ncols();
    let c_diag = tau - delta;
    let c_all = delta - tau * tau;
    let mut m = Array2::<F>::zeros((k, k));
    let mut offset = 0usize;
    for &mi in counts {
        let di = d.slice(ndarray::s![offset..offset + mi, ..]);
        let gram = di.t().dot(&di);
        let colsum = di.sum_axis(Axis(0));
        for a in 0..k {
            for b in 0..k {
                m[[a, b]] += c_diag * gram[[a, b]] + c_all * colsum[a] * colsum[b];
            }
        }
        offset += mi;
    }
    m
}

/// Rank score statistic `(D'psi)' M^-1 (D'psi)` where `M` is the chosen
/// working covariance of the per-subject score sums. Returns the statistic
/// and the exchangeable concordance estimate when that model is used.
pub(crate) fn rank_statistic<F: Scalar>(
    d: &Array2<F>,
    psi: &Array1<F>,
    residuals: &ArrayView1<F>,
    counts: &[usize],
    tau: F,
    corr: Correlation,
) -> Result<(f64, Option<f64>)> {
    let u = d.t().dot(psi);
    let (m, delta) = match corr {
        Correlation::Empirical => (score_outer(d, psi, counts), None),
        Correlation::Exchangeable => {
            let delta = estimate_delta(residuals, counts)?;
            (score_exchangeable(d, counts, tau, delta), Some(delta.to64()))
        }
    };
    let l = linalg::cholesky(&m.view()).ok_or_else(|| {
        Error::DegenerateDesign("score covariance is singular".into())
    })?;
    let sol = linalg::cholesky_solve(&l, &u.view());
    let stat = u.dot(&sol).to64().max(0.0);
    Ok((stat, delta))
}

fn guard_nonzero_block<F: Scalar>(d: &Array2<F>, reference: &ArrayView2<F>) -> Result<()> {
    let dn = linalg::fro_norm(&d.view());
    let rn = linalg::fro_norm(reference);
    if dn.to64() <= 1e-10 * rn.to64().max(1.0) {
        return Err(Error::DegenerateDesign(
            "test block lies in the span of the nuisance block".into(),
        ));
    }
    Ok(())
}

fn check_tested(tested: &[usize], limit: usize, kind: &str) -> Result<Vec<usize>> {
    if tested.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no {kind} selected for testing"
        )));
    }
    let mut idx = tested.to_vec();
    idx.sort_unstable();
    idx.dedup();
    if idx.len() != tested.len() {
        return Err(Error::InvalidArgument(format!(
            "duplicate {kind} indices in test request"
        )));
    }
    if let Some(&bad) = idx.iter().find(|&&i| i >= limit) {
        return Err(Error::InvalidArgument(format!(
            "{kind} index {bad} out of range (have {limit})"
        )));
    }
    Ok(idx)
}

fn weight_diag<F: Scalar>(
    ds: &LongitudinalDataset<F>,
    spec: &SplineSpec<F>,
    tau: F,
    mode: WeightMode,
    aux: &mut BTreeMap<String, f64>,
) -> Result<Array1<F>> {
    match mode {
        WeightMode::Identity => Ok(Array1::ones(ds.n_obs())),
        WeightMode::Estimated => {
            let w = density::estimate_weights(ds, spec, tau)?;
            aux.insert("density_floor_count".into(), w.floor_count as f64);
            aux.insert("bandwidth".into(), w.eps_n.to64());
            Ok(w.f_hat)
        }
    }
}

fn residualize_with_aux<F: Scalar>(
    test_block: &ArrayView2<F>,
    nuisance: &ArrayView2<F>,
    b_diag: &ArrayView1<F>,
    aux: &mut BTreeMap<String, f64>,
) -> Result<Array2<F>> {
    let rd = residualize(test_block, nuisance, b_diag)?;
    aux.insert("dropped_nuisance".into(), rd.dropped.len() as f64);
    aux.insert("nuisance_condition".into(), rd.condition);
    guard_nonzero_block(&rd.d, test_block)?;
    Ok(rd.d)
}

/// Wald test that the selected constant coefficients are zero, using the
/// sandwich covariance with estimated density weights.
pub fn wald_test<F: Scalar>(
    ds: &LongitudinalDataset<F>,
    spec: &SplineSpec<F>,
    tau: F,
    tested: &[usize],
) -> Result<TestResult> {
    let tested = check_tested(tested, ds.q(), "constant-coefficient")?;
    let mut aux = BTreeMap::new();

    let full = fit::fit(ds, spec, tau)?;
    let b_diag = weight_diag(ds, spec, tau, WeightMode::Estimated, &mut aux)?;
    let times = ds.times_mapped().as_slice().unwrap();
    let pi = spline::build_design(&ds.varying().view(), times, spec)?;
    let zstar = residualize_with_aux(
        &ds.constant().view(),
        &pi.view(),
        &b_diag.view(),
        &mut aux,
    )?;

    let psi = full.residuals.mapv(|r| qr::psi(r, tau));
    let mut bz = zstar.clone();
    for (mut row, &b) in bz.rows_mut().into_iter().zip(b_diag.iter()) {
        row.mapv_inplace(|v| v * b);
    }
    let k_n = zstar.t().dot(&bz);
    let lambda_n = score_outer(&zstar, &psi, ds.counts());

    let c = sandwich(&k_n, &lambda_n)?;
    let c_tt = c.select(Axis(0), &tested).select(Axis(1), &tested);
    let beta_t = Array1::from_iter(tested.iter().map(|&j| full.beta[j]));
    let stat = quad_form_inv(&c_tt, &beta_t)?.to64().max(0.0);

    let df = tested.len();
    Ok(TestResult {
        method: TestMethod::Wald,
        statistic: stat,
        df,
        p_value: dist::chi2_sf(stat, df),
        aux,
    })
}

/// `K^-1 Lambda K^-1` via two symmetric solves.
pub(crate) fn sandwich<F: Scalar>(k_n: &Array2<F>, lambda_n: &Array2<F>) -> Result<Array2<F>> {
    let l = linalg::cholesky(&k_n.view()).ok_or_else(|| Error::IllConditioned {
        what: "weighted information matrix".into(),
        cond: f64::INFINITY,
    })?;
    let q = k_n.nrows();
    let mut inner = Array2::<F>::zeros((q, q));
    for j in 0..q {
        let col = linalg::cholesky_solve(&l, &lambda_n.column(j));
        inner.column_mut(j).assign(&col);
    }
    // symmetric second solve: (K^-1 Lambda) K^-1 = (K^-1 (K^-1 Lambda)')'
    let mut c = Array2::<F>::zeros((q, q));
    for j in 0..q {
        let col = linalg::cholesky_solve(&l, &inner.row(j).to_owned().view());
        c.column_mut(j).assign(&col);
    }
    Ok(c)
}

/// `v' A^-1 v` for symmetric positive definite `A`.
pub(crate) fn quad_form_inv<F: Scalar>(a: &Array2<F>, v: &Array1<F>) -> Result<F> {
    let l = linalg::cholesky(&a.view()).ok_or_else(|| Error::IllConditioned {
        what: "test-block covariance".into(),
        cond: f64::INFINITY,
    })?;
    let sol = linalg::cholesky_solve(&l, &v.view());
    Ok(v.dot(&sol))
}

/// Rank score test that the selected constant coefficients are zero. Fits
/// the model with those columns excluded, scores the residual signs, and
/// contrasts them against the residualized tested columns.
pub fn rank_score_beta<F: Scalar>(
    ds: &LongitudinalDataset<F>,
    spec: &SplineSpec<F>,
    tau: F,
    tested: &[usize],
    corr: Correlation,
    weights: WeightMode,
) -> Result<TestResult> {
    let tested = check_tested(tested, ds.q(), "constant-coefficient")?;
    let mut aux = BTreeMap::new();

    let times = ds.times_mapped().as_slice().unwrap();
    let pi = spline::build_design(&ds.varying().view(), times, spec)?;
    let z = ds.constant();
    let rest: Vec<usize> = (0..ds.q()).filter(|j| !tested.contains(j)).collect();
    let z1 = z.select(Axis(1), &tested);
    let nuisance = if rest.is_empty() {
        pi
    } else {
        concatenate(Axis(1), &[pi.view(), z.select(Axis(1), &rest).view()]).unwrap()
    };

    let restricted = qr::solve(&QrProblem::new(
        nuisance.clone(),
        ds.response().clone(),
        tau,
    ))?;
    let psi = restricted.residuals.mapv(|r| qr::psi(r, tau));
    let b_diag = weight_diag(ds, spec, tau, weights, &mut aux)?;
    let d = residualize_with_aux(&z1.view(), &nuisance.view(), &b_diag.view(), &mut aux)?;

    let (stat, delta) = rank_statistic(
        &d,
        &psi,
        &restricted.residuals.view(),
        ds.counts(),
        tau,
        corr,
    )?;
    if let Some(dl) = delta {
        aux.insert("delta".into(), dl);
    }
    let df = tested.len();
    Ok(TestResult {
        method: match corr {
            Correlation::Empirical => TestMethod::Qrs,
            Correlation::Exchangeable => TestMethod::QrsDelta,
        },
        statistic: stat,
        df,
        p_value: dist::chi2_sf(stat, df),
        aux,
    })
}

/// Rank score test that the selected varying coefficients are constant in
/// time. The basis is re-parameterized so constancy is a zero restriction
/// on the non-constant directions, the model is re-fit under that
/// restriction, and the excluded directions are scored.
pub fn constancy_test<F: Scalar>(
    ds: &LongitudinalDataset<F>,
    spec: &SplineSpec<F>,
    tau: F,
    tested: &[usize],
    corr: Correlation,
    weights: WeightMode,
) -> Result<TestResult> {
    let tested = check_tested(tested, ds.p(), "varying-coefficient")?;
    let mut aux = BTreeMap::new();

    let times = ds.times_mapped().as_slice().unwrap();
    let (pi1, pi2) =
        spline::split_design_for_constancy(&ds.varying().view(), times, spec, &tested)?;
    let nuisance = if ds.q() == 0 {
        pi2
    } else {
        concatenate(Axis(1), &[pi2.view(), ds.constant().view()]).unwrap()
    };

    let restricted = qr::solve(&QrProblem::new(
        nuisance.clone(),
        ds.response().clone(),
        tau,
    ))?;
    let psi = restricted.residuals.mapv(|r| qr::psi(r, tau));
    let b_diag = weight_diag(ds, spec, tau, weights, &mut aux)?;
    let d = residualize_with_aux(&pi1.view(), &nuisance.view(), &b_diag.view(), &mut aux)?;

    let (stat, delta) = rank_statistic(
        &d,
        &psi,
        &restricted.residuals.view(),
        ds.counts(),
        tau,
        corr,
    )?;
    if let Some(dl) = delta {
        aux.insert("delta".into(), dl);
    }
    let df = (spec.basis_dim() - 1) * tested.len();
    aux.insert(
        "normal_statistic".into(),
        (stat - df as f64) / (2.0 * df as f64).sqrt(),
    );
    Ok(TestResult {
        method: match corr {
            Correlation::Empirical => TestMethod::Qrs,
            Correlation::Exchangeable => TestMethod::QrsDelta,
        },
        statistic: stat,
        df,
        p_value: dist::chi2_sf(stat, df),
        aux,
    })
}
