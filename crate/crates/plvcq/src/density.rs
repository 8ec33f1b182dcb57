//! Conditional density weights: plug-in bandwidth, difference-quotient
//! estimates of the error density at zero, and the diagonal weight matrix
//! used by the Wald covariance and optionally by the rank score tests.

use crate::data::LongitudinalDataset;
use crate::dist;
use crate::error::Result;
use crate::fit::{self, QuantileFit};
use crate::scalar::Scalar;
use crate::spline::SplineSpec;
use ndarray::Array1;
use serde::{Deserialize, Serialize};

/// Whether tests weight observations by estimated densities or treat the
/// errors as homoscedastic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightMode {
    Estimated,
    Identity,
}

/// Difference-quotient density estimates at zero, one per observation.
#[derive(Debug, Clone)]
pub struct DensityWeights<F> {
    pub eps_n: F,
    pub f_hat: Array1<F>,
    /// How many entries hit the spread floor (density cap).
    pub floor_count: usize,
}

/// Hall and Sheather's bandwidth for quantile spacing,
/// `1.57 n^(-1/3) [1.5 phi^2(q_tau) / (2 q_tau^2 + 1)]^(2/3)`,
/// shrunk when necessary so that both `tau - eps` and `tau + eps` stay
/// strictly inside (0,1).
pub fn hall_sheather_bandwidth<F: Scalar>(tau: F, n_subjects: usize) -> F {
    let t = tau.to64();
    let qn = dist::normal_quantile(t);
    let phi = dist::normal_pdf(qn);
    let raw = 1.57
        * (n_subjects as f64).powf(-1.0 / 3.0)
        * (1.5 * phi * phi / (2.0 * qn * qn + 1.0)).powf(2.0 / 3.0);
    let limit = 0.99 * t.min(1.0 - t);
    F::cast(raw.min(limit))
}

/// Turn per-observation quantile spreads into density estimates:
/// `f_hat = 2 eps / max(spread, 2 eps * 1e-3)`, which caps the estimate at
/// 1e3 when the spread is tiny, zero, or negative (quantile crossing).
/// Returns the estimates and the number of capped entries.
pub fn density_from_spread<F: Scalar>(eps_n: F, spread: &Array1<F>) -> (Array1<F>, usize) {
    let two_eps = F::cast(2.0) * eps_n;
    let zeta = two_eps * F::cast(1e-3);
    let mut floor_count = 0;
    let f_hat = spread.mapv(|s| {
        if s < zeta {
            floor_count += 1;
            two_eps / zeta
        } else {
            two_eps / s
        }
    });
    (f_hat, floor_count)
}

/// Estimate all f_hat(0) by fitting the model at `tau +/- eps_n` and forming
/// the per-observation difference quotient of the two fitted quantiles.
pub fn estimate_weights<F: Scalar>(
    ds: &LongitudinalDataset<F>,
    spec: &SplineSpec<F>,
    tau: F,
) -> Result<DensityWeights<F>> {
    let eps_n = hall_sheather_bandwidth(tau, ds.n_subjects());
    let (lo, hi) = rayon::join(
        || fit::fit(ds, spec, tau - eps_n),
        || fit::fit(ds, spec, tau + eps_n),
    );
    let spread = fitted_values(ds, spec, &hi?)? - &fitted_values(ds, spec, &lo?)?;
    let (f_hat, floor_count) = density_from_spread(eps_n, &spread);
    Ok(DensityWeights {
        eps_n,
        f_hat,
        floor_count,
    })
}

fn fitted_values<F: Scalar>(
    ds: &LongitudinalDataset<F>,
    spec: &SplineSpec<F>,
    f: &QuantileFit<F>,
) -> Result<Array1<F>> {
    let design = fit::stacked_design(ds, spec)?;
    let b = spec.basis_dim();
    let p = ds.p();
    let mut coef = Array1::<F>::zeros(design.ncols());
    for l in 0..p {
        for s in 0..b {
            coef[l * b + s] = f.theta[[l, s]];
        }
    }
    for k in 0..ds.q() {
        coef[p * b + k] = f.beta[k];
    }
    Ok(design.dot(&coef))
}

/// Diagonal of the weight matrix in dataset row order: the density
/// estimates, or all ones in homoscedastic mode.
pub fn build_b<F: Scalar>(w: &DensityWeights<F>, mode: WeightMode) -> Array1<F> {
    match mode {
        WeightMode::Estimated => w.f_hat.clone(),
        WeightMode::Identity => Array1::ones(w.f_hat.len()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{LongitudinalDataset, Observation};
    use crate::spline::{make_spec, KnotPlacement};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn bandwidth_matches_closed_form_oracle() {
        assert_abs_diff_eq!(
            hall_sheather_bandwidth(0.5f64, 8),
            0.302_095_264_273_914,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            hall_sheather_bandwidth(0.5f64, 1000),
            0.060_419_052_854_782_9,
            epsilon = 1e-12
        );
        assert!(hall_sheather_bandwidth(0.5f64, 1000) < hall_sheather_bandwidth(0.5f64, 8));
    }

    #[test]
    fn bandwidth_keeps_shifted_levels_inside_unit_interval() {
        for &(tau, n) in &[(0.5f64, 1usize), (0.99, 8), (0.01, 2), (0.9, 1), (0.05, 30)] {
            let eps = hall_sheather_bandwidth(tau, n);
            assert!(eps > 0.0);
            assert!(eps < tau.min(1.0 - tau), "eps {eps} too large at {tau}, {n}");
            assert!(tau - eps > 0.0 && tau + eps < 1.0);
        }
    }

    #[test]
    fn density_hand_value_and_floor() {
        let (f, floored) = density_from_spread(0.06f64, &array![0.4]);
        assert_abs_diff_eq!(f[0], 0.3, epsilon = 1e-15);
        assert_eq!(floored, 0);

        // non-positive spread is capped at 1e3
        let (f, floored) = density_from_spread(0.06f64, &array![0.4, 0.0, -0.2]);
        assert_abs_diff_eq!(f[1], 1e3, epsilon = 1e-9);
        assert_abs_diff_eq!(f[2], 1e3, epsilon = 1e-9);
        assert_eq!(floored, 2);
    }

    #[test]
    fn density_decreases_when_spreads_grow() {
        let s1 = array![0.0, 0.1, 0.5, 2.0];
        let s2 = s1.mapv(|v: f64| v + 0.3);
        let (f1, _) = density_from_spread(0.06, &s1);
        let (f2, _) = density_from_spread(0.06, &s2);
        for i in 0..s1.len() {
            assert!(f2[i] <= f1[i]);
        }
    }

    #[test]
    fn build_b_modes() {
        let w = DensityWeights {
            eps_n: 0.1,
            f_hat: array![0.3, 0.5],
            floor_count: 0,
        };
        assert_eq!(build_b(&w, WeightMode::Estimated), array![0.3, 0.5]);
        assert_eq!(build_b(&w, WeightMode::Identity), array![1.0, 1.0]);
    }

    #[test]
    fn estimated_weights_are_positive_on_noisy_data() {
        let mut observations = Vec::new();
        for s in 0..12 {
            for j in 0..6 {
                let t = j as f64;
                let x = ((s * 6 + j) as f64 * 0.77).sin() * 1.3;
                let noise = ((s * 13 + j * 7) as f64 * 0.531).sin() * 1.1;
                observations.push(Observation {
                    subject: format!("s{s}"),
                    time: t,
                    response: 1.0 + 2.0 * x + noise,
                    varying: vec![x],
                    constant: vec![1.0],
                });
            }
        }
        let ds =
            LongitudinalDataset::from_observations(observations, vec!["x1".into()], vec!["z1".into()], false)
                .unwrap();
        let spec = make_spec(1, 2, KnotPlacement::Uniform, None).unwrap();
        let w = estimate_weights(&ds, &spec, 0.5).unwrap();
        assert!(w.eps_n > 0.0 && w.eps_n < 0.5);
        assert_eq!(w.f_hat.len(), ds.n_obs());
        for &f in w.f_hat.iter() {
            assert!(f > 0.0 && f <= 1e3 + 1e-9);
        }
    }
}
