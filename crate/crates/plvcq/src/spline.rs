//! Normalized B-spline bases on [0,1] and the design matrices built from
//! them.
//!
//! A basis of degree `h` with `k` internal knots has `k + h + 1` functions.
//! The knot vector is clamped: the boundary knots 0 and 1 are repeated
//! `h + 1` times, so splines interpolate the boundary in the usual sense and
//! every basis value at `t = 0` or `t = 1` is a unit vector.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

/// Where internal knots are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnotPlacement {
    /// Equally spaced in (0,1): knot i at i/(k+1).
    Uniform,
    /// Empirical quantiles of the mapped observation times.
    SampleQuantile,
}

/// A B-spline basis specification on the mapped time domain [0,1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineSpec<F> {
    /// Polynomial degree of each piece (order minus one).
    pub degree: usize,
    /// Number of internal knots.
    pub k_internal: usize,
    /// Full clamped knot vector, length `k_internal + 2 (degree + 1)`.
    pub knots: Vec<F>,
}

impl<F: Scalar> SplineSpec<F> {
    /// Number of basis functions, `k_internal + degree + 1`.
    pub fn basis_dim(&self) -> usize {
        self.k_internal + self.degree + 1
    }

    /// Internal knots only (strictly inside (0,1)).
    pub fn internal_knots(&self) -> &[F] {
        &self.knots[self.degree + 1..self.degree + 1 + self.k_internal]
    }
}

/// Build a spline specification. `times` is consulted only for
/// [`KnotPlacement::SampleQuantile`]; it must then hold at least
/// `k_internal` distinct values.
pub fn make_spec<F: Scalar>(
    k_internal: usize,
    degree: usize,
    placement: KnotPlacement,
    times: Option<&[F]>,
) -> Result<SplineSpec<F>> {
    let internal: Vec<F> = match placement {
        KnotPlacement::Uniform => (1..=k_internal)
            .map(|i| F::usize(i) / F::usize(k_internal + 1))
            .collect(),
        KnotPlacement::SampleQuantile => {
            if k_internal == 0 {
                Vec::new()
            } else {
                let sample = times.ok_or_else(|| {
                    Error::InvalidArgument(
                        "sample-quantile knot placement needs observed times".into(),
                    )
                })?;
                let mut sorted: Vec<F> = sample.to_vec();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
                let distinct = sorted
                    .windows(2)
                    .filter(|w| w[0] < w[1])
                    .count()
                    + usize::from(!sorted.is_empty());
                if distinct < k_internal {
                    return Err(Error::DegenerateKnots(format!(
                        "{k_internal} internal knots requested but only {distinct} distinct times"
                    )));
                }
                quantile_knots(&sorted, k_internal)?
            }
        }
    };
    let mut knots = Vec::with_capacity(k_internal + 2 * (degree + 1));
    knots.extend(std::iter::repeat(F::zero()).take(degree + 1));
    knots.extend(internal);
    knots.extend(std::iter::repeat(F::one()).take(degree + 1));
    Ok(SplineSpec {
        degree,
        k_internal,
        knots,
    })
}

/// Empirical quantiles at levels i/(k+1), nudged to be strictly increasing
/// and strictly inside (0,1).
fn quantile_knots<F: Scalar>(sorted: &[F], k: usize) -> Result<Vec<F>> {
    let n = sorted.len();
    let mut knots = Vec::with_capacity(k);
    for i in 1..=k {
        let p = i as f64 / (k + 1) as f64;
        // linear interpolation between order statistics
        let h = p * (n - 1) as f64;
        let lo = h.floor() as usize;
        let frac = F::cast(h - lo as f64);
        let q = if lo + 1 < n {
            sorted[lo] * (F::one() - frac) + sorted[lo + 1] * frac
        } else {
            sorted[n - 1]
        };
        knots.push(q);
    }
    // force strict interior and strict increase with a minimal nudge
    let eps = F::cast(1e-9);
    let mut prev = F::zero();
    for knot in knots.iter_mut() {
        let lo = prev + eps;
        if *knot < lo {
            *knot = lo;
        }
        if *knot >= F::one() {
            return Err(Error::DegenerateKnots(
                "quantile knots collapse at the right boundary".into(),
            ));
        }
        prev = *knot;
    }
    Ok(knots)
}

/// Evaluate all basis functions at `t`, which must lie in [0,1]. Returns a
/// vector of length `basis_dim`; at most `degree + 1` entries are nonzero
/// and the entries sum to one. At `t = 1` the last basis function is taken
/// right-continuous, so the result is the last unit vector.
pub fn eval_basis<F: Scalar>(spec: &SplineSpec<F>, t: F) -> Result<Array1<F>> {
    if !(t >= F::zero() && t <= F::one()) {
        return Err(Error::Extrapolation(t.to64(), 0.0, 1.0));
    }
    let b = spec.basis_dim();
    let h = spec.degree;
    let knots = &spec.knots;
    // index of the knot interval containing t: largest mu in [h, b-1]
    // with knots[mu] <= t
    let mu = if t >= F::one() {
        b - 1
    } else {
        let mut lo = h;
        let mut hi = b - 1;
        while lo < hi {
            let mid = (lo + hi + 1) / 2;
            if knots[mid] <= t {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        lo
    };
    // Cox-de Boor triangular scheme for the h+1 nonzero values
    let mut vals = vec![F::zero(); h + 1];
    let mut left = vec![F::zero(); h + 1];
    let mut right = vec![F::zero(); h + 1];
    vals[0] = F::one();
    for j in 1..=h {
        left[j] = t - knots[mu + 1 - j];
        right[j] = knots[mu + j] - t;
        let mut saved = F::zero();
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let term = vals[r] / denom;
            vals[r] = saved + right[r + 1] * term;
            saved = left[j - r] * term;
        }
        vals[j] = saved;
    }
    let mut out = Array1::<F>::zeros(b);
    for (offset, v) in vals.into_iter().enumerate() {
        out[mu - h + offset] = v;
    }
    Ok(out)
}

/// Basis evaluation matrix: row per time, `basis_dim` columns.
pub fn basis_matrix<F: Scalar>(spec: &SplineSpec<F>, times: &[F]) -> Result<Array2<F>> {
    let b = spec.basis_dim();
    let mut m = Array2::<F>::zeros((times.len(), b));
    for (i, &t) in times.iter().enumerate() {
        let row = eval_basis(spec, t)?;
        m.row_mut(i).assign(&row);
    }
    Ok(m)
}

/// Assemble the varying-coefficient design: the row for an observation with
/// covariates `x = (x_1..x_p)` and basis values `pi` is the concatenation
/// `(x_1 pi', ..., x_p pi')`, giving `p * basis_dim` columns.
pub fn build_design<F: Scalar>(
    x: &ArrayView2<F>,
    times: &[F],
    spec: &SplineSpec<F>,
) -> Result<Array2<F>> {
    let n = x.nrows();
    if times.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{n} covariate rows but {} times",
            times.len()
        )));
    }
    let p = x.ncols();
    let b = spec.basis_dim();
    let mut design = Array2::<F>::zeros((n, p * b));
    for i in 0..n {
        let pi = eval_basis(spec, times[i])?;
        for l in 0..p {
            let xl = x[[i, l]];
            for s in 0..b {
                design[[i, l * b + s]] = xl * pi[s];
            }
        }
    }
    Ok(design)
}

/// Linear map isolating the constant direction of a coefficient block.
///
/// `g` has first row all ones and identity rows below, so the first
/// coordinate of `g . pi(t)` is the partition-of-unity sum 1. Writing the
/// block coefficients as `theta = g' xi`, the coefficient function becomes
/// `xi_1 + reduced_basis(t)' xi_rest`, and the function is constant exactly
/// when `xi_rest = 0`.
#[derive(Debug, Clone)]
pub struct ConstancyTransform<F> {
    /// The invertible `basis_dim x basis_dim` matrix.
    pub g: Array2<F>,
    /// Dimension of the non-constant part, `basis_dim - 1`.
    pub reduced_dim: usize,
}

/// Build the constancy transform for a basis of dimension at least 2.
pub fn make_constancy_transform<F: Scalar>(spec: &SplineSpec<F>) -> Result<ConstancyTransform<F>> {
    let b = spec.basis_dim();
    if b < 2 {
        return Err(Error::InvalidArgument(
            "constancy transform needs basis dimension >= 2".into(),
        ));
    }
    let mut g = Array2::<F>::eye(b);
    for s in 0..b {
        g[[0, s]] = F::one();
    }
    Ok(ConstancyTransform {
        g,
        reduced_dim: b - 1,
    })
}

/// Reduced basis `(B_2(t), ..., B_{basis_dim}(t))`, the non-constant
/// coordinates under the constancy transform.
pub fn eval_reduced_basis<F: Scalar>(spec: &SplineSpec<F>, t: F) -> Result<Array1<F>> {
    let full = eval_basis(spec, t)?;
    Ok(full.slice(ndarray::s![1..]).to_owned())
}

/// Split the varying-coefficient design for a constancy test of the
/// coefficients in `tested` (0-based covariate indices).
///
/// The first block collects `x_l * reduced_basis(t)'` for tested `l`
/// (`p_1 * (basis_dim - 1)` columns); the second collects the plain `x_l`
/// column for each tested `l` followed by the full `x_l * pi(t)'` block for
/// each untested `l`. Together the two blocks span the same column space as
/// the full design.
pub fn split_design_for_constancy<F: Scalar>(
    x: &ArrayView2<F>,
    times: &[F],
    spec: &SplineSpec<F>,
    tested: &[usize],
) -> Result<(Array2<F>, Array2<F>)> {
    let n = x.nrows();
    let p = x.ncols();
    if tested.is_empty() {
        return Err(Error::InvalidArgument(
            "constancy test needs at least one tested coefficient".into(),
        ));
    }
    let mut tested: Vec<usize> = tested.to_vec();
    tested.sort_unstable();
    tested.dedup();
    if *tested.last().unwrap() >= p {
        return Err(Error::InvalidArgument(format!(
            "tested coefficient index {} out of range for {p} varying coefficients",
            tested.last().unwrap()
        )));
    }
    let untested: Vec<usize> = (0..p).filter(|l| !tested.contains(l)).collect();
    let b = spec.basis_dim();
    let rb = b - 1;
    let p1 = tested.len();
    let mut pi1 = Array2::<F>::zeros((n, p1 * rb));
    let mut pi2 = Array2::<F>::zeros((n, p1 + untested.len() * b));
    for i in 0..n {
        let pi = eval_basis(spec, times[i])?;
        for (k, &l) in tested.iter().enumerate() {
            let xl = x[[i, l]];
            for s in 0..rb {
                pi1[[i, k * rb + s]] = xl * pi[s + 1];
            }
            pi2[[i, k]] = xl;
        }
        for (k, &l) in untested.iter().enumerate() {
            let xl = x[[i, l]];
            for s in 0..b {
                pi2[[i, p1 + k * b + s]] = xl * pi[s];
            }
        }
    }
    Ok((pi1, pi2))
}
