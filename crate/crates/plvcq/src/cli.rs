//! Command line front end: fitting, knot selection, tests, model
//! assessment, shrinkage, and the Monte Carlo harness, all emitting JSON
//! or CSV artifacts.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical
//! failure.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::data::{self, LongitudinalDataset, ModelSpec};
use crate::density::WeightMode;
use crate::error::{Error, Result};
use crate::fit::{self, FitArtifact, QuantileProcess, SicEntry};
use crate::inference::{self, Correlation, TestMethod};
use crate::shrink;
use crate::sim::{self, SimulationConfig, TestTarget, TruthModel};
use crate::spline::{self, KnotPlacement, SplineSpec};

#[derive(Parser)]
#[command(
    name = "plvcq",
    version,
    about = "Quantile regression for longitudinal data with time-varying and constant coefficients"
)]
pub struct Cli {
    /// Worker threads for parallel work (default: PLVCQ_THREADS or all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV with subject, time, y and covariate columns.
    #[arg(long)]
    data: PathBuf,
    /// Columns whose coefficients vary over time (comma separated).
    #[arg(long, value_delimiter = ',')]
    varying: Vec<String>,
    /// Columns whose coefficients are constant (comma separated).
    #[arg(long, value_delimiter = ',')]
    constant: Vec<String>,
    /// Add a time-varying intercept.
    #[arg(long)]
    intercept: bool,
}

impl DataArgs {
    fn load(&self) -> Result<LongitudinalDataset<f64>> {
        let spec = ModelSpec {
            varying_columns: self.varying.clone(),
            constant_columns: self.constant.clone(),
            intercept_varying: self.intercept,
        };
        data::load_csv(&self.data, &spec)
    }
}

#[derive(Args)]
struct BasisArgs {
    /// Spline degree.
    #[arg(long, default_value_t = 3)]
    degree: usize,
    /// Internal knot count, or "auto" to minimize the information
    /// criterion over the default range.
    #[arg(long, default_value = "auto")]
    knots: String,
}

impl BasisArgs {
    /// Resolve the knot count, selecting at `tau` when "auto".
    fn resolve(&self, ds: &LongitudinalDataset<f64>, tau: f64) -> Result<SplineSpec<f64>> {
        let k = if self.knots == "auto" {
            let range = fit::default_k_range(ds.n_obs());
            fit::select_knots(ds, tau, self.degree, &range)?.0
        } else {
            self.knots.parse::<usize>().map_err(|_| {
                Error::InvalidArgument(format!(
                    "--knots takes \"auto\" or a non-negative integer, got {:?}",
                    self.knots
                ))
            })?
        };
        spline::make_spec(k, self.degree, KnotPlacement::Uniform, None)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Qrs,
    QrsDelta,
    Wald,
}

impl MethodArg {
    fn to_method(self) -> TestMethod {
        match self {
            MethodArg::Qrs => TestMethod::Qrs,
            MethodArg::QrsDelta => TestMethod::QrsDelta,
            MethodArg::Wald => TestMethod::Wald,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WeightsArg {
    Identity,
    Estimated,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TargetArg {
    Beta,
    Constancy,
    Mse,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TruthArg {
    Plvc,
    Constancy,
    Lcc,
}

impl TruthArg {
    fn to_truth(self) -> TruthModel {
        match self {
            TruthArg::Plvc => TruthModel::PlvcEstimation,
            TruthArg::Constancy => TruthModel::PlvcConstancy,
            TruthArg::Lcc => TruthModel::Lcc,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model at one quantile level and emit a JSON artifact.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        basis: BasisArgs,
        #[arg(long)]
        tau: f64,
        /// Output path (stdout when omitted).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also write a CSV of fitted coefficient curves here.
        #[arg(long)]
        curves: Option<PathBuf>,
        /// Grid size for --curves.
        #[arg(long, default_value_t = 100)]
        grid: usize,
    },
    /// Score candidate knot counts with the information criterion.
    SelectKnots {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        tau: f64,
        #[arg(long, default_value_t = 3)]
        degree: usize,
        /// Candidate counts (comma separated); default 1..ceil(N^0.2)+2.
        #[arg(long)]
        candidates: Option<String>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Test whether selected constant coefficients are zero.
    TestBeta {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        basis: BasisArgs,
        #[arg(long)]
        tau: f64,
        /// Constant-coefficient columns to test (comma separated).
        #[arg(long, value_delimiter = ',')]
        coef: Vec<String>,
        #[arg(long, value_enum, default_value_t = MethodArg::Qrs)]
        method: MethodArg,
        /// Density weighting for the rank score tests (the Wald test
        /// always estimates densities).
        #[arg(long, value_enum)]
        weights: Option<WeightsArg>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Test whether selected varying coefficients are constant in time.
    TestConstancy {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        basis: BasisArgs,
        #[arg(long)]
        tau: f64,
        /// Varying-coefficient columns to test (comma separated; use
        /// "(intercept)" for the generated intercept).
        #[arg(long, value_delimiter = ',')]
        coef: Vec<String>,
        #[arg(long, value_enum, default_value_t = MethodArg::Qrs)]
        method: MethodArg,
        #[arg(long, value_enum)]
        weights: Option<WeightsArg>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Draw simulated responses near a target time from a fitted quantile
    /// process, for Q-Q comparison against the observed responses.
    Assess {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        basis: BasisArgs,
        /// Quantile grid (comma separated); default 0.05,0.10,...,0.95.
        #[arg(long)]
        taus: Option<String>,
        /// Target time in original units.
        #[arg(long)]
        t_star: f64,
        /// Window half-width around the target time.
        #[arg(long)]
        tol: f64,
        #[arg(long, default_value_t = 200)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Monte Carlo level/power or estimation-error study on synthetic data.
    Simulate {
        #[arg(long)]
        case: u8,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        tau: f64,
        #[arg(long)]
        reps: usize,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        #[arg(long, default_value_t = 0.8)]
        rho: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = TargetArg::Beta)]
        target: TargetArg,
        /// Tests to run (comma separated qrs,qrs-delta,wald); defaults to
        /// all applicable ones. Ignored for --target mse.
        #[arg(long, value_delimiter = ',', value_enum)]
        methods: Vec<MethodArg>,
        /// Data generating truth; defaults to the target's natural one.
        #[arg(long, value_enum)]
        truth: Option<TruthArg>,
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Shrink the non-constant directions of a varying coefficient with an
    /// L1 penalty tuned by the information criterion.
    Shrink {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        basis: BasisArgs,
        #[arg(long)]
        tau: f64,
        /// Varying-coefficient columns to shrink (comma separated).
        #[arg(long, value_delimiter = ',')]
        coef: Vec<String>,
        /// Penalty grid (comma separated) or "auto".
        #[arg(long, default_value = "auto")]
        lambdas: String,
        #[arg(long, value_enum, default_value_t = FormatArg::Json)]
        format: FormatArg,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// Parse and run. Returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_threads(cli.threads);
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

pub fn exit_code_for(e: &Error) -> i32 {
    if e.is_usage_error() {
        1
    } else if e.is_data_error() {
        2
    } else {
        3
    }
}

fn init_threads(flag: Option<usize>) {
    let n = flag.or_else(|| {
        std::env::var("PLVCQ_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = n.filter(|&n| n > 0) {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

#[derive(Serialize)]
struct KnotSelection {
    k_star: usize,
    table: Vec<SicEntry>,
}

#[derive(Serialize)]
struct AssessReport {
    t_star: f64,
    tol: f64,
    seed: u64,
    taus: Vec<f64>,
    draws: Vec<f64>,
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Fit {
            data,
            basis,
            tau,
            output,
            curves,
            grid,
        } => {
            let ds = data.load()?;
            let spec = basis.resolve(&ds, tau)?;
            let fitted = fit::fit(&ds, &spec, tau)?;
            write_output(&output, &to_json(&FitArtifact::from_fit(&fitted))?)?;
            if let Some(path) = curves {
                let proc = QuantileProcess {
                    taus: vec![tau],
                    fits: vec![fitted],
                };
                let csv = emit_plot_data(&proc, &ds.varying_labels(), grid)?;
                write_output(&Some(path), &csv)?;
            }
            Ok(())
        }
        Command::SelectKnots {
            data,
            tau,
            degree,
            candidates,
            output,
        } => {
            let ds = data.load()?;
            let range = match candidates {
                Some(list) => parse_usize_list(&list)?,
                None => fit::default_k_range(ds.n_obs()),
            };
            let (k_star, table) = fit::select_knots(&ds, tau, degree, &range)?;
            write_output(&output, &to_json(&KnotSelection { k_star, table })?)
        }
        Command::TestBeta {
            data,
            basis,
            tau,
            coef,
            method,
            weights,
            output,
        } => {
            let ds = data.load()?;
            let spec = basis.resolve(&ds, tau)?;
            let tested = find_indices(ds.constant_labels(), &coef, "constant")?;
            let result = match method {
                MethodArg::Wald => {
                    if weights == Some(WeightsArg::Identity) {
                        return Err(Error::InvalidArgument(
                            "the Wald test always estimates density weights".into(),
                        ));
                    }
                    inference::wald_test(&ds, &spec, tau, &tested)?
                }
                m => inference::rank_score_beta(
                    &ds,
                    &spec,
                    tau,
                    &tested,
                    correlation_for(m),
                    weight_mode(weights),
                )?,
            };
            write_output(&output, &to_json(&result)?)
        }
        Command::TestConstancy {
            data,
            basis,
            tau,
            coef,
            method,
            weights,
            output,
        } => {
            if method == MethodArg::Wald {
                return Err(Error::InvalidArgument(
                    "constancy is tested with qrs or qrs-delta".into(),
                ));
            }
            let ds = data.load()?;
            let spec = basis.resolve(&ds, tau)?;
            let labels = ds.varying_labels();
            let tested = find_indices(&labels, &coef, "varying")?;
            let result = inference::constancy_test(
                &ds,
                &spec,
                tau,
                &tested,
                correlation_for(method),
                weight_mode(weights),
            )?;
            write_output(&output, &to_json(&result)?)
        }
        Command::Assess {
            data,
            basis,
            taus,
            t_star,
            tol,
            draws,
            seed,
            format,
            output,
        } => {
            let ds = data.load()?;
            let taus = match taus {
                Some(list) => parse_f64_list(&list)?,
                None => (1..=19).map(|k| k as f64 * 0.05).collect(),
            };
            // one shared basis across the grid, selected at the middle level
            let spec = basis.resolve(&ds, taus[taus.len() / 2])?;
            let proc = fit::fit_process(&ds, &spec, &taus)?;
            let sample = fit::assess(&proc, &ds, t_star, tol, draws, seed)?;
            let text = match format {
                FormatArg::Json => to_json(&AssessReport {
                    t_star,
                    tol,
                    seed,
                    taus,
                    draws: sample,
                })?,
                FormatArg::Csv => {
                    let mut out = String::from("draw,y_star\n");
                    for (i, v) in sample.iter().enumerate() {
                        out.push_str(&format!("{i},{v}\n"));
                    }
                    out
                }
            };
            write_output(&output, &text)
        }
        Command::Simulate {
            case,
            n,
            tau,
            reps,
            beta,
            eta,
            rho,
            seed,
            target,
            methods,
            truth,
            format,
            output,
        } => {
            let mut config = SimulationConfig::new(case, n, tau)?;
            config.beta = beta;
            config.eta = eta;
            config.rho = rho;
            config.reps = reps;
            config.seed = seed;
            config.truth = truth.map(TruthArg::to_truth).unwrap_or(match target {
                TargetArg::Constancy => TruthModel::PlvcConstancy,
                _ => TruthModel::PlvcEstimation,
            });
            let report = match target {
                TargetArg::Mse => sim::mc_mse(&config)?,
                TargetArg::Beta | TargetArg::Constancy => {
                    let sim_target = if target == TargetArg::Beta {
                        TestTarget::Beta
                    } else {
                        TestTarget::Constancy
                    };
                    let methods: Vec<TestMethod> = if methods.is_empty() {
                        match sim_target {
                            TestTarget::Beta => vec![
                                TestMethod::Qrs,
                                TestMethod::QrsDelta,
                                TestMethod::Wald,
                            ],
                            TestTarget::Constancy => {
                                vec![TestMethod::Qrs, TestMethod::QrsDelta]
                            }
                        }
                    } else {
                        methods.iter().map(|m| m.to_method()).collect()
                    };
                    sim::mc_level_power(&config, sim_target, &methods)?
                }
            };
            let text = match format {
                FormatArg::Json => to_json(&report)?,
                FormatArg::Csv => report.to_csv(),
            };
            write_output(&output, &text)
        }
        Command::Shrink {
            data,
            basis,
            tau,
            coef,
            lambdas,
            format,
            output,
        } => {
            let ds = data.load()?;
            let spec = basis.resolve(&ds, tau)?;
            let labels = ds.varying_labels();
            let tested = find_indices(&labels, &coef, "varying")?;
            let grid = if lambdas == "auto" {
                shrink::default_lambda_grid(&ds, &spec, tau, &tested)?
            } else {
                parse_f64_list(&lambdas)?
            };
            let result = shrink::shrinkage_constancy(&ds, &spec, tau, &tested, &grid)?;
            let text = match format {
                FormatArg::Json => to_json(&result)?,
                FormatArg::Csv => {
                    let mut out = String::from("lambda,sic,xi1_l1norm,df\n");
                    for e in &result.sic_path {
                        out.push_str(&format!(
                            "{},{},{},{}\n",
                            e.lambda, e.sic, e.xi1_l1norm, e.df
                        ));
                    }
                    out
                }
            };
            write_output(&output, &text)
        }
    }
}

fn correlation_for(method: MethodArg) -> Correlation {
    match method {
        MethodArg::QrsDelta => Correlation::Exchangeable,
        _ => Correlation::Empirical,
    }
}

fn weight_mode(weights: Option<WeightsArg>) -> WeightMode {
    match weights {
        Some(WeightsArg::Estimated) => WeightMode::Estimated,
        _ => WeightMode::Identity,
    }
}

/// Dense evaluation of every fitted coefficient curve on the original time
/// scale: one CSV row per (quantile level, coefficient, grid time).
pub fn emit_plot_data(
    proc: &QuantileProcess<f64>,
    labels: &[String],
    grid: usize,
) -> Result<String> {
    if grid < 2 {
        return Err(Error::InvalidArgument(
            "curve grid needs at least two points".into(),
        ));
    }
    if proc.fits.is_empty() {
        return Err(Error::InvalidArgument("empty quantile process".into()));
    }
    let mut out = String::from("tau,coefficient,t,alpha\n");
    for (tau, fitted) in proc.taus.iter().zip(&proc.fits) {
        let tm = fitted.time_map;
        for (l, label) in labels.iter().enumerate() {
            for g in 0..grid {
                let t = tm.t_min + (tm.t_max - tm.t_min) * g as f64 / (grid - 1) as f64;
                let v = fitted.eval_alpha(l, t)?;
                out.push_str(&format!("{tau},{label},{t},{v}\n"));
            }
        }
    }
    Ok(out)
}

fn find_indices(available: &[String], wanted: &[String], kind: &str) -> Result<Vec<usize>> {
    if wanted.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "--coef needs at least one {kind} column name"
        )));
    }
    wanted
        .iter()
        .map(|name| {
            available.iter().position(|c| c == name).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "{kind} column {name:?} not in the model (have: {})",
                    available.join(", ")
                ))
            })
        })
        .collect()
}

fn parse_f64_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("not a number: {s:?}")))
        })
        .collect()
}

fn parse_usize_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidArgument(format!("not a count: {s:?}")))
        })
        .collect()
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

fn write_output(path: &Option<PathBuf>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}
