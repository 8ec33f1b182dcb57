//! Model fitting: varying-coefficient quantile regression through a spline
//! basis, knot-count selection by a Schwarz-type criterion, coefficient
//! recovery, and the simulation-based model assessment.

use crate::data::{LongitudinalDataset, TimeMap};
use crate::error::{Error, Result};
use crate::qr::{self, QrProblem, SolveStatus};
use crate::scalar::Scalar;
use crate::spline::{self, SplineSpec};
use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// A fitted model at one quantile level.
#[derive(Debug, Clone)]
pub struct QuantileFit<F> {
    pub tau: F,
    pub spec: SplineSpec<F>,
    /// Spline coefficients, one row per varying covariate.
    pub theta: Array2<F>,
    /// Constant coefficients.
    pub beta: Array1<F>,
    /// Check loss at the solution.
    pub objective: F,
    /// Residuals in dataset row order; rows interpolated by the vertex
    /// solution are exactly zero.
    pub residuals: Array1<F>,
    pub status: SolveStatus,
    /// Map between original time units and the [0,1] fitting domain.
    pub time_map: TimeMap<F>,
}

impl<F: Scalar> QuantileFit<F> {
    /// Varying coefficient `l` evaluated at an original-units time.
    pub fn eval_alpha(&self, l: usize, t: F) -> Result<F> {
        if l >= self.theta.nrows() {
            return Err(Error::InvalidArgument(format!(
                "coefficient index {l} out of range for {} varying coefficients",
                self.theta.nrows()
            )));
        }
        if t < self.time_map.t_min || t > self.time_map.t_max {
            return Err(Error::Extrapolation(
                t.to64(),
                self.time_map.t_min.to64(),
                self.time_map.t_max.to64(),
            ));
        }
        let pi = spline::eval_basis(&self.spec, self.time_map.forward(t))?;
        Ok(pi.dot(&self.theta.row(l)))
    }

    /// Conditional quantile at covariates `(x, z)` and original-units time.
    pub fn predict_quantile(&self, x: &ArrayView1<F>, z: &ArrayView1<F>, t: F) -> Result<F> {
        let p = self.theta.nrows();
        let q = self.beta.len();
        if x.len() != p || z.len() != q {
            return Err(Error::InvalidArgument(format!(
                "covariate lengths ({}, {}) do not match model ({p}, {q})",
                x.len(),
                z.len()
            )));
        }
        let pi = {
            if t < self.time_map.t_min || t > self.time_map.t_max {
                return Err(Error::Extrapolation(
                    t.to64(),
                    self.time_map.t_min.to64(),
                    self.time_map.t_max.to64(),
                ));
            }
            spline::eval_basis(&self.spec, self.time_map.forward(t))?
        };
        let mut v = F::zero();
        for l in 0..p {
            v += x[l] * pi.dot(&self.theta.row(l));
        }
        Ok(v + z.dot(&self.beta))
    }
}

/// Fit the model at one quantile level.
pub fn fit<F: Scalar>(
    ds: &LongitudinalDataset<F>,
    spec: &SplineSpec<F>,
    tau: F,
) -> Result<QuantileFit<F>> {
    let design = stacked_design(ds, spec)?;
    let problem = QrProblem::new(design, ds.response().clone(), tau);
    let sol = qr::solve(&problem)?;
    let p = ds.p();
    let q = ds.q();
    let b = spec.basis_dim();
    let mut theta = Array2::<F>::zeros((p, b));
    for l in 0..p {
        for s in 0..b {
            theta[[l, s]] = sol.coefficients[l * b + s];
        }
    }
    let beta = Array1::from_shape_fn(q, |k| sol.coefficients[p * b + k]);
    Ok(QuantileFit {
        tau,
        spec: spec.clone(),
        theta,
        beta,
        objective: sol.objective,
        residuals: sol.residuals,
        status: sol.status,
        time_map: ds.time_map(),
    })
}

/// The stacked design: varying blocks then constant columns.
pub fn stacked_design<F: Scalar>(
    ds: &LongitudinalDataset<F>,
    spec: &SplineSpec<F>,
) -> Result<Array2<F>> {
    let times = ds.times_mapped().as_slice().unwrap();
    let pi = spline::build_design(&ds.varying().view(), times, spec)?;
    let n = ds.n_obs();
    let q = ds.q();
    let mut design = Array2::<F>::zeros((n, pi.ncols() + q));
    design.slice_mut(ndarray::s![.., ..pi.ncols()]).assign(&pi);
    design
        .slice_mut(ndarray::s![.., pi.ncols()..])
        .assign(ds.constant());
    Ok(design)
}

/// One row of the knot-selection table.
#[derive(Debug, Clone, Serialize)]
pub struct SicEntry {
    pub k: usize,
    pub sic: f64,
    pub objective: f64,
}

/// Schwarz-type criterion: `log(loss) + log(N)/(2N) * params`.
pub fn sic_value<F: Scalar>(loss: F, n_obs: usize, param_count: usize) -> f64 {
    let n = n_obs as f64;
    loss.to64().ln() + n.ln() / (2.0 * n) * param_count as f64
}

/// Default knot-count candidates: 1 through ceil(N^(1/5)) + 2.
pub fn default_k_range(n_obs: usize) -> Vec<usize> {
    let hi = (n_obs as f64).powf(0.2).ceil() as usize + 2;
    (1..=hi).collect()
}

/// Pick the entry with the smallest criterion value, breaking ties toward
/// the smallest knot count.
pub fn argmin_sic(table: &[SicEntry]) -> Option<usize> {
    let mut best: Option<&SicEntry> = None;
    for e in table {
        let better = match best {
            None => true,
            Some(b) => e.sic < b.sic || (e.sic == b.sic && e.k < b.k),
        };
        if better {
            best = Some(e);
        }
    }
    best.map(|e| e.k)
}

/// Fit at every candidate knot count and minimize the Schwarz criterion.
/// Returns the chosen count and the full table.
pub fn select_knots<F: Scalar>(
    ds: &LongitudinalDataset<F>,
    tau: F,
    degree: usize,
    k_candidates: &[usize],
) -> Result<(usize, Vec<SicEntry>)> {
    if k_candidates.is_empty() {
        return Err(Error::InvalidArgument(
            "knot selection needs at least one candidate".into(),
        ));
    }
    let mut table = Vec::with_capacity(k_candidates.len());
    for &k in k_candidates {
        let spec = spline::make_spec(k, degree, spline::KnotPlacement::Uniform, None)?;
        let f = fit(ds, &spec, tau)?;
        let params = ds.p() * spec.basis_dim() + ds.q();
        table.push(SicEntry {
            k,
            sic: sic_value(f.objective, ds.n_obs(), params),
            objective: f.objective.to64(),
        });
    }
    let k_star = argmin_sic(&table).unwrap();
    Ok((k_star, table))
}

/// Fits at an increasing grid of quantile levels, sharing one basis.
#[derive(Debug, Clone)]
pub struct QuantileProcess<F> {
    pub taus: Vec<F>,
    pub fits: Vec<QuantileFit<F>>,
}

/// Fit the model at each level of a strictly increasing grid in (0,1).
pub fn fit_process<F: Scalar>(
    ds: &LongitudinalDataset<F>,
    spec: &SplineSpec<F>,
    taus: &[F],
) -> Result<QuantileProcess<F>> {
    if taus.is_empty() {
        return Err(Error::InvalidArgument("empty quantile grid".into()));
    }
    for pair in taus.windows(2) {
        if !(pair[0] < pair[1]) {
            return Err(Error::InvalidArgument(
                "quantile grid must be strictly increasing".into(),
            ));
        }
    }
    let fits: Vec<QuantileFit<F>> = taus
        .par_iter()
        .map(|&tau| {
            fit(ds, spec, tau).map_err(|e| Error::FitAt {
                tau: tau.to64(),
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    Ok(QuantileProcess {
        taus: taus.to_vec(),
        fits,
    })
}

/// Simulate responses from a fitted quantile process near a target time,
/// for contrasting against the observed responses (for example in a Q-Q
/// plot).
///
/// Each draw samples `u` uniform on (0,1) and an observation uniformly from
/// those within `tol` of `t_star` (original units), then reads off the
/// `u`-th conditional quantile at that observation's covariates by linear
/// interpolation across the fitted grid, clamped at the grid ends. The
/// per-observation quantile values are sorted first, so the interpolant is
/// a valid (monotone) quantile function even if the raw fits cross.
pub fn assess<F: Scalar>(
    proc: &QuantileProcess<F>,
    ds: &LongitudinalDataset<F>,
    t_star: F,
    tol: F,
    n_draws: usize,
    seed: u64,
) -> Result<Vec<F>> {
    let rows: Vec<usize> = (0..ds.n_obs())
        .filter(|&i| (ds.times_original()[i] - t_star).abs() <= tol)
        .collect();
    if rows.is_empty() {
        return Err(Error::EmptyWindow {
            t_star: t_star.to64(),
            tol: tol.to64(),
        });
    }
    // quantile values per qualifying row, sorted to enforce monotonicity
    let k = proc.taus.len();
    let mut q = Array2::<F>::zeros((rows.len(), k));
    for (r, &i) in rows.iter().enumerate() {
        let x = ds.varying().row(i);
        let z = ds.constant().row(i);
        let t = ds.times_original()[i];
        for (c, fitted) in proc.fits.iter().enumerate() {
            q[[r, c]] = fitted.predict_quantile(&x, &z, t)?;
        }
        let mut vals: Vec<F> = q.row(r).to_vec();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        for (c, v) in vals.into_iter().enumerate() {
            q[[r, c]] = v;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        let u = F::cast(rng.gen::<f64>());
        let r = rng.gen_range(0..rows.len());
        sample.push(interp_quantile(&proc.taus, &q.row(r), u));
    }
    Ok(sample)
}

/// Piecewise-linear interpolation of sorted quantile values over the tau
/// grid, clamped at the ends.
fn interp_quantile<F: Scalar>(taus: &[F], values: &ArrayView1<F>, u: F) -> F {
    let k = taus.len();
    if u <= taus[0] {
        return values[0];
    }
    if u >= taus[k - 1] {
        return values[k - 1];
    }
    let mut hi = 1;
    while taus[hi] < u {
        hi += 1;
    }
    let lo = hi - 1;
    let w = (u - taus[lo]) / (taus[hi] - taus[lo]);
    values[lo] * (F::one() - w) + values[hi] * w
}

/// Serializable snapshot of a fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitArtifact {
    pub tau: f64,
    pub degree: usize,
    pub knots: Vec<f64>,
    /// Row-major `p x basis_dim` spline coefficients.
    pub theta: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub time_min: f64,
    pub time_max: f64,
}

impl FitArtifact {
    pub fn from_fit<F: Scalar>(fit: &QuantileFit<F>) -> Self {
        FitArtifact {
            tau: fit.tau.to64(),
            degree: fit.spec.degree,
            knots: fit.spec.internal_knots().iter().map(|k| k.to64()).collect(),
            theta: (0..fit.theta.nrows())
                .map(|l| fit.theta.row(l).iter().map(|v| v.to64()).collect())
                .collect(),
            beta: fit.beta.iter().map(|v| v.to64()).collect(),
            objective: fit.objective.to64(),
            status: fit.status,
            time_min: fit.time_map.t_min.to64(),
            time_max: fit.time_map.t_max.to64(),
        }
    }
}
