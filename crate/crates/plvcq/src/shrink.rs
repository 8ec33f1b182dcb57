//! L1-shrinkage screening for constancy: penalize the non-constant spline
//! directions of selected varying coefficients and see whether a
//! criterion-tuned penalty drives them all to zero.

use crate::data::LongitudinalDataset;
use crate::error::{Error, Result};
use crate::fit;
use crate::qr::{self, QrProblem};
use crate::scalar::Scalar;
use crate::spline::{self, SplineSpec};
use ndarray::{concatenate, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

/// Coefficients standardized this far from zero count as "not shrunk".
const ZERO_THRESHOLD: f64 = 1e-6;

/// One evaluated penalty level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaEntry {
    pub lambda: f64,
    pub sic: f64,
    /// L1 norm of the penalized (non-constant direction) coefficients.
    pub xi1_l1norm: f64,
    /// Coefficients above the zero threshold after standardization.
    pub df: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShrinkageResult {
    pub lambda_star: f64,
    /// ‖ξ̂_1‖₁ at the selected penalty.
    pub xi1_l1norm: f64,
    pub df: usize,
    pub sic_path: Vec<LambdaEntry>,
}

struct ShrinkProblem<F> {
    design: Array2<F>,
    response: Array1<F>,
    tau: F,
    /// Number of leading penalized columns.
    n_pen: usize,
    /// Per-column standardization scale: root mean square of the column.
    scales: Vec<f64>,
}

fn assemble<F: Scalar>(
    ds: &LongitudinalDataset<F>,
    spec: &SplineSpec<F>,
    tau: F,
    tested: &[usize],
) -> Result<ShrinkProblem<F>> {
    let times = ds.times_mapped().as_slice().unwrap();
    let (pi1, pi2) =
        spline::split_design_for_constancy(&ds.varying().view(), times, spec, tested)?;
    let n_pen = pi1.ncols();
    let design = if ds.q() == 0 {
        concatenate(Axis(1), &[pi1.view(), pi2.view()]).unwrap()
    } else {
        concatenate(Axis(1), &[pi1.view(), pi2.view(), ds.constant().view()]).unwrap()
    };
    let n = design.nrows() as f64;
    let scales = design
        .columns()
        .into_iter()
        .map(|c| (c.iter().map(|v| v.to64() * v.to64()).sum::<f64>() / n).sqrt())
        .collect();
    Ok(ShrinkProblem {
        design,
        response: ds.response().clone(),
        tau,
        n_pen,
        scales,
    })
}

struct LambdaFit<F> {
    coefficients: Array1<F>,
    loss: F,
}

fn solve_at<F: Scalar>(p: &ShrinkProblem<F>, lambda: f64) -> Result<LambdaFit<F>> {
    let problem = QrProblem::new(p.design.clone(), p.response.clone(), p.tau)
        .with_penalty((0..p.n_pen).collect(), F::cast(lambda));
    let sol = if lambda == 0.0 {
        qr::solve(&QrProblem::new(p.design.clone(), p.response.clone(), p.tau))?
    } else {
        qr::solve_l1(&problem)?
    };
    let loss = qr::check_loss(&sol.residuals.view(), p.tau);
    Ok(LambdaFit {
        coefficients: sol.coefficients,
        loss,
    })
}

fn xi1_norm<F: Scalar>(fit: &LambdaFit<F>, n_pen: usize) -> f64 {
    (0..n_pen).map(|j| fit.coefficients[j].to64().abs()).sum()
}

fn count_df<F: Scalar>(fit: &LambdaFit<F>, scales: &[f64]) -> usize {
    fit.coefficients
        .iter()
        .zip(scales)
        .filter(|(c, s)| (c.to64() * **s).abs() > ZERO_THRESHOLD)
        .count()
}

/// Default penalty grid: 30 log-spaced values ending at the smallest
/// power-of-two multiple of 1 that zeroes out all penalized coefficients
/// (found by doubling, halving first if 1 already suffices), starting
/// three decades below it.
pub fn default_lambda_grid<F: Scalar>(
    ds: &LongitudinalDataset<F>,
    spec: &SplineSpec<F>,
    tau: F,
    tested: &[usize],
) -> Result<Vec<f64>> {
    let p = assemble(ds, spec, tau, tested)?;
    let all_zero = |lambda: f64| -> Result<bool> {
        let f = solve_at(&p, lambda)?;
        Ok(xi1_norm(&f, p.n_pen) <= ZERO_THRESHOLD)
    };

    let mut lambda_max = 1.0f64;
    if all_zero(lambda_max)? {
        // already strong enough: shrink until it stops zeroing, keep the
        // last value that still zeroed
        let mut lo = lambda_max;
        for _ in 0..40 {
            lo /= 2.0;
            if !all_zero(lo)? {
                break;
            }
            lambda_max = lo;
        }
    } else {
        for _ in 0..40 {
            lambda_max *= 2.0;
            if all_zero(lambda_max)? {
                break;
            }
        }
    }

    let lambda_min = 1e-3 * lambda_max;
    let ratio = (lambda_max / lambda_min).ln();
    Ok((0..30)
        .map(|k| lambda_min * (ratio * k as f64 / 29.0).exp())
        .collect())
}

/// Solve the penalized fit along the grid, score each solution with
/// `log(check loss) + log(N)/(2N) * df`, and report the minimizer. Ties
/// prefer the larger penalty (the more parsimonious fit).
pub fn shrinkage_constancy<F: Scalar>(
    ds: &LongitudinalDataset<F>,
    spec: &SplineSpec<F>,
    tau: F,
    tested: &[usize],
    lambda_grid: &[f64],
) -> Result<ShrinkageResult> {
    if lambda_grid.is_empty() {
        return Err(Error::InvalidArgument("empty penalty grid".into()));
    }
    if lambda_grid.iter().any(|l| !l.is_finite() || *l < 0.0) {
        return Err(Error::InvalidArgument(
            "penalty grid must be non-negative and finite".into(),
        ));
    }
    let p = assemble(ds, spec, tau, tested)?;
    let n_obs = p.design.nrows();

    let mut sic_path = Vec::with_capacity(lambda_grid.len());
    for &lambda in lambda_grid {
        let f = solve_at(&p, lambda)?;
        let df = count_df(&f, &p.scales);
        sic_path.push(LambdaEntry {
            lambda,
            sic: fit::sic_value(f.loss, n_obs, df),
            xi1_l1norm: xi1_norm(&f, p.n_pen),
            df,
        });
    }

    let mut best = 0usize;
    for (k, e) in sic_path.iter().enumerate() {
        let b = &sic_path[best];
        if e.sic < b.sic || (e.sic == b.sic && e.lambda > b.lambda) {
            best = k;
        }
    }
    let chosen = &sic_path[best];
    Ok(ShrinkageResult {
        lambda_star: chosen.lambda,
        xi1_l1norm: chosen.xi1_l1norm,
        df: chosen.df,
        sic_path,
    })
}
