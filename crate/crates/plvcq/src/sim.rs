//! Monte Carlo harness: three longitudinal data generating processes with
//! irregular measurement times and within-subject error correlation, plus
//! level/power and estimation-error studies over many replicates.
//!
//! Replicate r draws from an independent counter-selected stream of one
//! seeded generator, so results do not depend on scheduling order and are
//! reproducible bit for bit.

use crate::data::{LongitudinalDataset, Observation};
use crate::density::WeightMode;
use crate::dist;
use crate::error::{Error, Result};
use crate::fit;
use crate::inference::{self, Correlation, TestMethod};
use crate::linalg;
use crate::spline::{self, KnotPlacement};
use ndarray::{Array1, Array2};
use rand::distributions::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, Normal};

/// Which coefficient family the responses are composed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthModel {
    /// Four smooth varying coefficients (the estimation study).
    PlvcEstimation,
    /// Same, but the departure of alpha_1 from the constant 2 is scaled by
    /// `eta` (the constancy study; `eta = 0` makes it exactly constant).
    PlvcConstancy,
    /// All four coefficients constant: (15, 2, 6, -4).
    Lcc,
}

/// Which null hypothesis the level/power study exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestTarget {
    /// H0: the constant coefficient on z is zero.
    Beta,
    /// H0: alpha_1 is time-invariant.
    Constancy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// 1: exchangeable normal errors, 2: AR(1) normal errors decaying with
    /// the time gap, 3: exchangeable heavy-tailed (t with 3 df) errors.
    pub case: u8,
    /// Subject count.
    pub n: usize,
    pub tau: f64,
    /// True constant coefficient on z.
    pub beta: f64,
    /// Departure scale of alpha_1 from constancy (PlvcConstancy only).
    pub eta: f64,
    /// Base within-subject correlation.
    pub rho: f64,
    pub reps: usize,
    pub seed: u64,
    pub truth: TruthModel,
}

impl SimulationConfig {
    pub fn new(case: u8, n: usize, tau: f64) -> Result<Self> {
        let c = SimulationConfig {
            case,
            n,
            tau,
            beta: 1.0,
            eta: 1.0,
            rho: 0.8,
            reps: 1,
            seed: 0,
            truth: TruthModel::PlvcEstimation,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.case) {
            return Err(Error::InvalidArgument(format!(
                "case must be 1, 2 or 3, got {}",
                self.case
            )));
        }
        if self.n == 0 {
            return Err(Error::InvalidArgument("need at least one subject".into()));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidTau(self.tau));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::InvalidArgument(format!(
                "rho must be in [0,1), got {}",
                self.rho
            )));
        }
        if self.reps == 0 {
            return Err(Error::InvalidArgument("reps must be at least 1".into()));
        }
        Ok(())
    }
}

/// True value of varying coefficient `l` (0..4) at time `t`.
pub fn alpha_truth(truth: TruthModel, eta: f64, l: usize, t: f64) -> f64 {
    use std::f64::consts::PI;
    match (truth, l) {
        (TruthModel::Lcc, 0) => 15.0,
        (TruthModel::Lcc, 1) => 2.0,
        (TruthModel::Lcc, 2) => 6.0,
        (TruthModel::Lcc, _) => -4.0,
        (_, 0) => 15.0 + 20.0 * (t * PI / 20.0).sin(),
        (TruthModel::PlvcEstimation, 1) => 2.0 - 3.0 * ((3.0 * t - 25.0) * PI / 15.0).cos(),
        (TruthModel::PlvcConstancy, 1) => 2.0 - 3.0 * eta * ((t - 25.0) * PI / 15.0).cos(),
        (_, 2) => 6.0 - 0.6 * t,
        (_, _) => -4.0 + (20.0 - 3.0 * t).powi(3) / 1000.0,
    }
}

/// One subject's measurement times: scheduled 0..=10, each nonzero slot
/// skipped with probability 0.2, retained nonzero slots jittered by
/// U(-0.5, 0.5). Time 0 is always present and unjittered.
pub fn measurement_times<R: Rng>(rng: &mut R) -> Vec<f64> {
    let mut times = vec![0.0];
    for s in 1..=10 {
        if rng.gen::<f64>() < 0.2 {
            continue;
        }
        times.push(s as f64 + rng.gen_range(-0.5..0.5));
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times
}

/// The tau-th quantile of the common error marginal: standard normal for
/// cases 1-2, t with 3 degrees of freedom for case 3.
pub fn marginal_quantile(case: u8, tau: f64) -> f64 {
    match case {
        3 => dist::t_quantile(tau, 3.0),
        _ => dist::normal_quantile(tau),
    }
}

/// Lower Cholesky factor of the within-subject error correlation.
fn correlation_chol(case: u8, rho: f64, times: &[f64]) -> Array2<f64> {
    let m = times.len();
    let r = Array2::from_shape_fn((m, m), |(a, b)| {
        if a == b {
            1.0
        } else if case == 2 {
            rho.powf((times[a] - times[b]).abs())
        } else {
            rho
        }
    });
    linalg::cholesky(&r.view()).expect("correlation matrix is positive definite for rho < 1")
}

/// Raw (uncentered) error vector for one subject.
pub fn draw_error_vector<R: Rng>(case: u8, rho: f64, times: &[f64], rng: &mut R) -> Vec<f64> {
    let m = times.len();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let g = Array1::from_shape_fn(m, |_| normal.sample(rng));
    let mut e = correlation_chol(case, rho, times).dot(&g);
    if case == 3 {
        let chi = ChiSquared::new(3.0).unwrap();
        for v in e.iter_mut() {
            *v *= (3.0 / chi.sample(rng)).sqrt();
        }
    }
    e.to_vec()
}

fn replicate_rng(seed: u64, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    rng
}

/// Generate one replicate's dataset. Varying covariates are the intercept,
/// a standard normal, a uniform drifting with time, and a standard
/// exponential; the constant covariate is a per-subject Bernoulli(0.5).
pub fn gen_dataset(config: &SimulationConfig, replicate: usize) -> Result<LongitudinalDataset<f64>> {
    config.validate()?;
    let mut rng = replicate_rng(config.seed, replicate);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let center = marginal_quantile(config.case, config.tau);

    let mut observations = Vec::new();
    for i in 0..config.n {
        let times = measurement_times(&mut rng);
        let z = if rng.gen::<f64>() < 0.5 { 1.0 } else { 0.0 };
        let e = draw_error_vector(config.case, config.rho, &times, &mut rng);
        for (j, &t) in times.iter().enumerate() {
            let x1 = normal.sample(&mut rng);
            let x2 = rng.gen_range(t / 10.0..2.0 + t / 10.0);
            let x3 = -(1.0 - rng.gen::<f64>()).ln();
            let a = |l| alpha_truth(config.truth, config.eta, l, t);
            let y = a(0) + a(1) * x1 + a(2) * x2 + a(3) * x3
                + config.beta * z
                + (1.0 + x1.abs()) * (e[j] - center);
            observations.push(Observation {
                subject: format!("s{i:05}"),
                time: t,
                response: y,
                varying: vec![1.0, x1, x2, x3],
                constant: vec![z],
            });
        }
    }
    LongitudinalDataset::from_observations(
        observations,
        vec!["x1".into(), "x2".into(), "x3".into()],
        vec!["z".into()],
        true,
    )
}

/// One summary line of a Monte Carlo report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McRow {
    pub name: String,
    pub rate: Option<f64>,
    pub se: Option<f64>,
    pub mse: Option<f64>,
    pub bias: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McReport {
    pub config: SimulationConfig,
    /// Replicates that completed.
    pub completed: usize,
    pub failed: usize,
    pub rows: Vec<McRow>,
}

impl McReport {
    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("name,rate,se,mse,bias\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.name,
                cell(r.rate),
                cell(r.se),
                cell(r.mse),
                cell(r.bias)
            ));
        }
        out
    }
}

const FAILURE_CAP_PERCENT: usize = 5;
const TEST_LEVEL: f64 = 0.05;

fn check_failure_cap(failed: usize, total: usize) -> Result<()> {
    if failed * 100 > total * FAILURE_CAP_PERCENT {
        return Err(Error::ReplicateFailures {
            failed,
            total,
            cap_percent: FAILURE_CAP_PERCENT,
        });
    }
    Ok(())
}

/// Run the per-replicate closure in parallel, tolerate isolated failures
/// up to the cap, and hand back completed results in replicate order.
fn run_replicates<T: Send>(
    reps: usize,
    body: impl Fn(usize) -> Result<T> + Sync,
) -> Result<(Vec<T>, usize)> {
    let outcomes: Vec<Result<T>> = (0..reps).into_par_iter().map(&body).collect();
    let failed = outcomes.iter().filter(|r| r.is_err()).count();
    check_failure_cap(failed, reps)?;
    let kept = outcomes.into_iter().filter_map(|r| r.ok()).collect();
    Ok((kept, failed))
}

fn fit_selected(
    ds: &LongitudinalDataset<f64>,
    tau: f64,
) -> Result<(spline::SplineSpec<f64>, usize)> {
    let range = fit::default_k_range(ds.n_obs());
    let (k_star, _) = fit::select_knots(ds, tau, 3, &range)?;
    Ok((spline::make_spec(k_star, 3, KnotPlacement::Uniform, None)?, k_star))
}

/// Rejection rates of the requested tests at the 5% level. Knot count is
/// re-selected on every replicate.
pub fn mc_level_power(
    config: &SimulationConfig,
    target: TestTarget,
    methods: &[TestMethod],
) -> Result<McReport> {
    config.validate()?;
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no test methods requested".into()));
    }
    if target == TestTarget::Constancy && methods.contains(&TestMethod::Wald) {
        return Err(Error::InvalidArgument(
            "the Wald test applies to constant coefficients, not constancy".into(),
        ));
    }

    let (flags, failed) = run_replicates(config.reps, |rep| {
        let ds = gen_dataset(config, rep)?;
        let (spec, _) = fit_selected(&ds, config.tau)?;
        let mut rejections = Vec::with_capacity(methods.len());
        for &method in methods {
            let result = match (target, method) {
                (TestTarget::Beta, TestMethod::Wald) => {
                    inference::wald_test(&ds, &spec, config.tau, &[0])?
                }
                (TestTarget::Beta, m) => inference::rank_score_beta(
                    &ds,
                    &spec,
                    config.tau,
                    &[0],
                    correlation_for(m),
                    WeightMode::Identity,
                )?,
                (TestTarget::Constancy, m) => inference::constancy_test(
                    &ds,
                    &spec,
                    config.tau,
                    &[1],
                    correlation_for(m),
                    WeightMode::Identity,
                )?,
            };
            rejections.push(result.p_value < TEST_LEVEL);
        }
        Ok(rejections)
    })?;

    let completed = flags.len();
    let rows = methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let hits = flags.iter().filter(|f| f[k]).count();
            let rate = hits as f64 / completed as f64;
            McRow {
                name: method_name(method).into(),
                rate: Some(rate),
                se: Some((rate * (1.0 - rate) / completed as f64).sqrt()),
                mse: None,
                bias: None,
            }
        })
        .collect();
    Ok(McReport {
        config: *config,
        completed,
        failed,
        rows,
    })
}

fn correlation_for(method: TestMethod) -> Correlation {
    match method {
        TestMethod::QrsDelta => Correlation::Exchangeable,
        _ => Correlation::Empirical,
    }
}

pub fn method_name(method: TestMethod) -> &'static str {
    match method {
        TestMethod::Wald => "wald",
        TestMethod::Qrs => "qrs",
        TestMethod::QrsDelta => "qrs_delta",
    }
}

/// Estimation error of the constant coefficient under the varying
/// coefficient model and under the all-constant model, plus the average
/// squared error of each fitted coefficient curve.
pub fn mc_mse(config: &SimulationConfig) -> Result<McReport> {
    config.validate()?;
    let lcc_spec = spline::make_spec(0, 0, KnotPlacement::Uniform, None)?;

    // (beta_plvc, beta_lcc, per-coefficient curve ASE)
    let (results, failed) = run_replicates(config.reps, |rep| {
        let ds = gen_dataset(config, rep)?;
        let (spec, _) = fit_selected(&ds, config.tau)?;
        let plvc = fit::fit(&ds, &spec, config.tau)?;
        let lcc = fit::fit(&ds, &lcc_spec, config.tau)?;

        let mut ase = [0.0f64; 4];
        for i in 0..ds.n_obs() {
            let t = ds.times_original()[i];
            for l in 0..4 {
                let d = plvc.eval_alpha(l, t)? - alpha_truth(config.truth, config.eta, l, t);
                ase[l] += d * d;
            }
        }
        for a in ase.iter_mut() {
            *a /= ds.n_obs() as f64;
        }
        Ok((plvc.beta[0], lcc.beta[0], ase))
    })?;

    let completed = results.len();
    let nf = completed as f64;
    let mut rows = Vec::new();
    for (name, pick) in [
        ("beta_plvc", 0usize),
        ("beta_lcc", 1),
    ] {
        let errs: Vec<f64> = results
            .iter()
            .map(|r| (if pick == 0 { r.0 } else { r.1 }) - config.beta)
            .collect();
        let bias = errs.iter().sum::<f64>() / nf;
        let mse = errs.iter().map(|e| e * e).sum::<f64>() / nf;
        rows.push(McRow {
            name: name.into(),
            rate: None,
            se: None,
            mse: Some(mse),
            bias: Some(bias),
        });
    }
    for l in 0..4 {
        let mean_ase = results.iter().map(|r| r.2[l]).sum::<f64>() / nf;
        rows.push(McRow {
            name: format!("alpha{l}_ase"),
            rate: None,
            se: None,
            mse: Some(mean_ase),
            bias: None,
        });
    }
    Ok(McReport {
        config: *config,
        completed,
        failed,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn truth_values_at_reference_points() {
        assert_abs_diff_eq!(
            alpha_truth(TruthModel::PlvcEstimation, 1.0, 0, 0.0),
            15.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            alpha_truth(TruthModel::PlvcEstimation, 1.0, 2, 10.0),
            0.0,
            epsilon = 1e-12
        );
        // the cubic part of alpha_3 vanishes at t = 20/3
        assert_abs_diff_eq!(
            alpha_truth(TruthModel::PlvcEstimation, 1.0, 3, 20.0 / 3.0),
            -4.0,
            epsilon = 1e-12
        );
        // eta = 0 makes alpha_1 exactly constant
        for t in [0.0, 2.5, 7.0, 10.0] {
            assert_abs_diff_eq!(
                alpha_truth(TruthModel::PlvcConstancy, 0.0, 1, t),
                2.0,
                epsilon = 1e-12
            );
        }
        assert_eq!(alpha_truth(TruthModel::Lcc, 1.0, 3, 4.2), -4.0);
    }

    #[test]
    fn marginal_quantiles_match_reference_distributions() {
        assert_abs_diff_eq!(marginal_quantile(1, 0.5), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(marginal_quantile(1, 0.25), -0.6745, epsilon = 5e-5);
        assert_abs_diff_eq!(marginal_quantile(3, 0.25), -0.7649, epsilon = 5e-5);
    }

    #[test]
    fn measurement_time_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut total = 0usize;
        for _ in 0..2000 {
            let t = measurement_times(&mut rng);
            assert!(!t.is_empty() && t.len() <= 11);
            assert_eq!(t[0], 0.0);
            assert!(t.windows(2).all(|w| w[0] <= w[1]));
            assert!(t.iter().all(|&v| v >= 0.0));
            total += t.len();
        }
        let mean = total as f64 / 2000.0;
        assert!((mean - 9.0).abs() < 0.15, "mean m = {mean}");
    }

    #[test]
    fn datasets_are_reproducible_and_streams_differ() {
        let config = SimulationConfig::new(1, 12, 0.5).unwrap();
        let a = gen_dataset(&config, 3).unwrap();
        let b = gen_dataset(&config, 3).unwrap();
        assert_eq!(a.response(), b.response());
        assert_eq!(a.varying(), b.varying());
        assert_eq!(a.times_original(), b.times_original());
        let c = gen_dataset(&config, 4).unwrap();
        assert_ne!(a.response(), c.response());
    }

    #[test]
    fn covariates_have_the_advertised_structure() {
        let config = SimulationConfig::new(2, 40, 0.5).unwrap();
        let ds = gen_dataset(&config, 0).unwrap();
        for i in 0..ds.n_obs() {
            assert_eq!(ds.varying()[[i, 0]], 1.0);
            let t = ds.times_original()[i];
            let x2 = ds.varying()[[i, 2]];
            assert!(x2 >= t / 10.0 && x2 <= 2.0 + t / 10.0);
            assert!(ds.varying()[[i, 3]] >= 0.0); // exponential
            let z = ds.constant()[[i, 0]];
            assert!(z == 0.0 || z == 1.0);
        }
        // z constant within subject
        for s in 0..ds.n_subjects() {
            let r = ds.subject_range(s);
            let z0 = ds.constant()[[r.start, 0]];
            assert!(r.clone().all(|i| ds.constant()[[i, 0]] == z0));
        }
    }

    #[test]
    fn error_marginals_are_centered_at_the_target_quantile() {
        // fraction of raw errors below the nominal marginal quantile
        for (case, tau) in [(1u8, 0.5), (1, 0.25), (3, 0.25)] {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let times: Vec<f64> = (0..5).map(|j| j as f64).collect();
            let q = marginal_quantile(case, tau);
            let mut below = 0usize;
            let mut total = 0usize;
            for _ in 0..8000 {
                for e in draw_error_vector(case, 0.8, &times, &mut rng) {
                    below += usize::from(e < q);
                    total += 1;
                }
            }
            let frac = below as f64 / total as f64;
            // within-subject correlation inflates the variance of the
            // fraction, so the tolerance is generous
            assert!((frac - tau).abs() < 0.03, "case {case}: {frac} vs {tau}");
        }
    }

    #[test]
    fn case_two_correlation_decays_with_time_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let times = [0.0, 2.0];
        let (mut s00, mut s11, mut s01) = (0.0, 0.0, 0.0);
        let reps = 40000;
        for _ in 0..reps {
            let e = draw_error_vector(2, 0.8, &times, &mut rng);
            s00 += e[0] * e[0];
            s11 += e[1] * e[1];
            s01 += e[0] * e[1];
        }
        let corr = s01 / (s00.sqrt() * s11.sqrt());
        assert_abs_diff_eq!(corr, 0.8f64.powi(2), epsilon = 0.02);
    }

    #[test]
    fn failure_cap_logic() {
        assert!(check_failure_cap(0, 100).is_ok());
        assert!(check_failure_cap(5, 100).is_ok());
        assert!(matches!(
            check_failure_cap(6, 100),
            Err(Error::ReplicateFailures {
                failed: 6,
                total: 100,
                cap_percent: 5
            })
        ));
    }

    #[test]
    fn config_validation_rejects_bad_fields() {
        assert!(SimulationConfig::new(4, 10, 0.5).is_err());
        assert!(SimulationConfig::new(1, 0, 0.5).is_err());
        assert!(SimulationConfig::new(1, 10, 1.2).is_err());
        let mut c = SimulationConfig::new(1, 10, 0.5).unwrap();
        c.rho = 1.0;
        assert!(c.validate().is_err());
        c.rho = 0.8;
        c.reps = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn small_level_power_run_produces_rates() {
        let mut config = SimulationConfig::new(1, 15, 0.5).unwrap();
        config.reps = 3;
        config.beta = 0.0;
        config.seed = 11;
        let report = mc_level_power(
            &config,
            TestTarget::Beta,
            &[TestMethod::Qrs, TestMethod::QrsDelta],
        )
        .unwrap();
        assert_eq!(report.completed + report.failed, 3);
        assert_eq!(report.rows.len(), 2);
        for row in &report.rows {
            let r = row.rate.unwrap();
            assert!((0.0..=1.0).contains(&r));
        }
        // reproducible end to end
        let again = mc_level_power(
            &config,
            TestTarget::Beta,
            &[TestMethod::Qrs, TestMethod::QrsDelta],
        )
        .unwrap();
        assert_eq!(report.to_csv(), again.to_csv());
    }

    #[test]
    fn wald_is_rejected_for_constancy_target() {
        let config = SimulationConfig::new(1, 15, 0.5).unwrap();
        let err = mc_level_power(&config, TestTarget::Constancy, &[TestMethod::Wald]).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn small_mse_run_produces_rows() {
        let mut config = SimulationConfig::new(1, 15, 0.5).unwrap();
        config.reps = 3;
        config.seed = 5;
        let report = mc_mse(&config).unwrap();
        let names: Vec<&str> = report.rows.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(
            names,
            vec![
                "beta_plvc",
                "beta_lcc",
                "alpha0_ase",
                "alpha1_ase",
                "alpha2_ase",
                "alpha3_ase"
            ]
        );
        for row in &report.rows {
            assert!(row.mse.unwrap().is_finite());
        }
        let text = serde_json::to_string(&report).unwrap();
        let back: McReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back.completed, report.completed);
    }
}
