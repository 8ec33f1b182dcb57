//! Statistical behavior at desk scale: consistency of the concordance and
//! density estimates, level robustness away from the median, and agreement
//! between the shrinkage selector and the constancy test.

use ndarray::ArrayView1;
use plvcq::data::{LongitudinalDataset, Observation};
use plvcq::density::{self, WeightMode};
use plvcq::inference::{self, Correlation};
use plvcq::sim::{self, SimulationConfig, TestTarget, TruthModel};
use plvcq::spline::{self, KnotPlacement};
use plvcq::{dist, fit, inference::TestMethod, shrink};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn delta_estimate_approaches_tau_squared_for_independent_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 4000;
    let counts = vec![2usize; n];
    for (tau, tol) in [(0.5f64, 0.03), (0.25, 0.02)] {
        let shift = dist::normal_quantile(tau);
        let residuals: Vec<f64> = (0..2 * n)
            .map(|_| {
                let u: f64 = rng.gen();
                dist::normal_quantile(u.clamp(1e-12, 1.0 - 1e-12)) - shift
            })
            .collect();
        let delta =
            inference::estimate_delta(&ArrayView1::from(&residuals), &counts).unwrap();
        assert!(
            (delta - tau * tau).abs() < tol,
            "tau={tau}: delta={delta}, want ~{}",
            tau * tau
        );
    }
}

#[test]
fn estimated_density_tracks_standard_normal() {
    // pure-noise responses: the fitted intercept curve at tau +/- eps
    // recovers marginal quantiles, so f_hat should approach phi(z_tau)
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut observations = Vec::new();
    for i in 0..400 {
        for j in 0..5 {
            let t = j as f64 + rng.gen_range(-0.3..0.3);
            let u: f64 = rng.gen();
            let y = dist::normal_quantile(u.clamp(1e-12, 1.0 - 1e-12));
            observations.push(Observation {
                subject: format!("s{i:04}"),
                time: t,
                response: y,
                varying: vec![1.0],
                constant: vec![],
            });
        }
    }
    let ds = LongitudinalDataset::from_observations(observations, vec![], vec![], true).unwrap();
    let spec = spline::make_spec(1, 3, KnotPlacement::Uniform, None).unwrap();
    let w = density::estimate_weights(&ds, &spec, 0.5).unwrap();
    let mean_f = w.f_hat.mean().unwrap();
    let phi0 = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    assert!(
        (mean_f - phi0).abs() < 0.1,
        "mean f_hat {mean_f} vs phi(0) {phi0}"
    );
    assert_eq!(w.floor_count, 0);
}

#[test]
fn qrs_level_holds_away_from_the_median() {
    let mut config = SimulationConfig::new(1, 100, 0.75).unwrap();
    config.beta = 0.0;
    config.reps = 200;
    config.seed = 17;
    let report = sim::mc_level_power(&config, TestTarget::Beta, &[TestMethod::Qrs]).unwrap();
    let rate = report.rows[0].rate.unwrap();
    // nominal 0.05; binomial SE at 200 reps is ~0.015
    assert!(
        (0.01..=0.10).contains(&rate),
        "tau=0.75 level {rate} out of range"
    );
}

#[test]
fn shrinkage_selector_agrees_with_constancy_test() {
    let spec = spline::make_spec(2, 3, KnotPlacement::Uniform, None).unwrap();
    let mut agreements = 0usize;
    let mut total = 0usize;
    for (eta, seed) in [
        (0.0, 100u64),
        (0.0, 101),
        (0.0, 102),
        (1.5, 200),
        (1.5, 201),
        (1.5, 202),
    ] {
        let mut config = SimulationConfig::new(1, 30, 0.5).unwrap();
        config.eta = eta;
        config.seed = seed;
        config.truth = TruthModel::PlvcConstancy;
        let ds = sim::gen_dataset(&config, 0).unwrap();

        let test = inference::constancy_test(
            &ds,
            &spec,
            0.5,
            &[1],
            Correlation::Empirical,
            WeightMode::Identity,
        )
        .unwrap();
        let test_says_varying = test.p_value < 0.05;

        let grid = shrink::default_lambda_grid(&ds, &spec, 0.5, &[1]).unwrap();
        let sel = shrink::shrinkage_constancy(&ds, &spec, 0.5, &[1], &grid).unwrap();
        let shrink_says_varying = sel.xi1_l1norm > 1e-6;

        total += 1;
        if test_says_varying == shrink_says_varying {
            agreements += 1;
        }
        // the strong alternative must be picked up by both
        if eta == 1.5 {
            assert!(test_says_varying, "eta=1.5 seed={seed}: test missed");
            assert!(shrink_says_varying, "eta=1.5 seed={seed}: shrinkage missed");
        }
    }
    assert!(
        agreements * 2 > total,
        "agreement {agreements}/{total} not a majority"
    );
}

#[test]
fn spline_error_shrinks_with_sample_size_per_coefficient() {
    let mut small = SimulationConfig::new(1, 25, 0.5).unwrap();
    small.reps = 30;
    small.seed = 7;
    let mut large = small;
    large.n = 100;
    let ase = |config: &SimulationConfig| -> Vec<f64> {
        let report = sim::mc_mse(config).unwrap();
        report
            .rows
            .iter()
            .filter(|r| r.name.ends_with("_ase"))
            .map(|r| r.mse.unwrap())
            .collect()
    };
    let ase_small = ase(&small);
    let ase_large = ase(&large);
    let worse = ase_large
        .iter()
        .zip(&ase_small)
        .filter(|(l, s)| l >= s)
        .count();
    assert!(
        worse == 0,
        "ASE did not shrink uniformly: small {ase_small:?} large {ase_large:?}"
    );
}

#[test]
fn beta_estimate_centers_on_truth_across_replicates() {
    let mut config = SimulationConfig::new(2, 50, 0.5).unwrap();
    config.beta = 1.0;
    config.reps = 40;
    config.seed = 3;
    let spec = spline::make_spec(1, 3, KnotPlacement::Uniform, None).unwrap();
    let mut betas = Vec::new();
    for rep in 0..config.reps {
        let ds = sim::gen_dataset(&config, rep).unwrap();
        let f = fit::fit(&ds, &spec, 0.5).unwrap();
        betas.push(f.beta[0]);
    }
    let mean = betas.iter().sum::<f64>() / betas.len() as f64;
    let sd = (betas.iter().map(|b| (b - mean).powi(2)).sum::<f64>()
        / (betas.len() - 1) as f64)
        .sqrt();
    let se = sd / (betas.len() as f64).sqrt();
    assert!(
        (mean - 1.0).abs() < 4.0 * se.max(0.02),
        "mean beta {mean} (se {se}) too far from 1"
    );
}
