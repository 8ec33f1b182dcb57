//! Longitudinal dataset ingestion and validation.
//!
//! A dataset is a set of subjects, each carrying repeated timestamped
//! measurements. Covariates are split into a varying part (coefficients
//! allowed to change over time) and a constant part. Times are kept in
//! their original units alongside an affine map onto [0,1], the domain the
//! spline basis lives on.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

/// One measurement row.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation<F> {
    pub subject: String,
    pub time: F,
    pub response: F,
    /// Covariates with time-varying coefficients (includes the leading 1
    /// when the model has a varying intercept).
    pub varying: Vec<F>,
    /// Covariates with constant coefficients.
    pub constant: Vec<F>,
}

/// Which CSV columns play which role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Column names whose coefficients vary over time.
    pub varying_columns: Vec<String>,
    /// Column names whose coefficients are constant.
    pub constant_columns: Vec<String>,
    /// Prepend a column of ones to the varying part (a time-varying
    /// intercept).
    pub intercept_varying: bool,
}

pub const RESERVED_COLUMNS: [&str; 3] = ["subject", "time", "y"];

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.intercept_varying && self.varying_columns.is_empty() {
            return Err(Error::InvalidModelSpec(
                "model needs at least one varying coefficient (a column or the intercept)".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for name in self.varying_columns.iter().chain(&self.constant_columns) {
            if RESERVED_COLUMNS.contains(&name.as_str()) {
                return Err(Error::InvalidModelSpec(format!(
                    "column name `{name}` is reserved"
                )));
            }
            if !seen.insert(name) {
                return Err(Error::InvalidModelSpec(format!(
                    "column `{name}` appears in more than one role"
                )));
            }
        }
        Ok(())
    }

    /// Number of varying covariates, counting the generated intercept.
    pub fn p(&self) -> usize {
        self.varying_columns.len() + usize::from(self.intercept_varying)
    }

    pub fn q(&self) -> usize {
        self.constant_columns.len()
    }
}

/// Affine map from the observed time range onto [0,1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeMap<F> {
    pub t_min: F,
    pub t_max: F,
}

impl<F: Scalar> TimeMap<F> {
    pub fn from_times(times: &[F]) -> Self {
        let mut lo = F::infinity();
        let mut hi = F::neg_infinity();
        for &t in times {
            lo = lo.min(t);
            hi = hi.max(t);
        }
        TimeMap { t_min: lo, t_max: hi }
    }

    /// Map an original time into [0,1], clamping tiny numerical overshoot.
    /// A degenerate range (all observations at one time) maps to 0.
    pub fn forward(&self, t: F) -> F {
        if self.t_max <= self.t_min {
            return F::zero();
        }
        let u = (t - self.t_min) / (self.t_max - self.t_min);
        u.max(F::zero()).min(F::one())
    }

    /// Original-units time for a mapped value.
    pub fn inverse(&self, u: F) -> F {
        if self.t_max <= self.t_min {
            return self.t_min;
        }
        self.t_min + u * (self.t_max - self.t_min)
    }
}

/// A validated longitudinal dataset: observations grouped by subject (in
/// order of first appearance) and sorted by time within subject.
#[derive(Debug, Clone)]
pub struct LongitudinalDataset<F> {
    subject_ids: Vec<String>,
    counts: Vec<usize>,
    t_orig: Array1<F>,
    t_mapped: Array1<F>,
    response: Array1<F>,
    varying: Array2<F>,
    constant: Array2<F>,
    varying_names: Vec<String>,
    constant_names: Vec<String>,
    has_intercept: bool,
    time_map: TimeMap<F>,
}

impl<F: Scalar> LongitudinalDataset<F> {
    /// Group, sort, and validate raw observations. `varying_names` must
    /// exclude the generated intercept; pass `has_intercept = true` when
    /// the first varying component is the constant 1.
    pub fn from_observations(
        observations: Vec<Observation<F>>,
        varying_names: Vec<String>,
        constant_names: Vec<String>,
        has_intercept: bool,
    ) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::EmptyInput);
        }
        let p = varying_names.len() + usize::from(has_intercept);
        let q = constant_names.len();
        if p == 0 {
            return Err(Error::InvalidModelSpec(
                "at least one varying covariate required".into(),
            ));
        }
        for (i, obs) in observations.iter().enumerate() {
            if obs.varying.len() != p || obs.constant.len() != q {
                return Err(Error::InvalidModelSpec(format!(
                    "observation {i} has {} varying and {} constant covariates, expected {p} and {q}",
                    obs.varying.len(),
                    obs.constant.len()
                )));
            }
            let finite = obs.time.is_finite()
                && obs.response.is_finite()
                && obs.varying.iter().all(|v| v.is_finite())
                && obs.constant.iter().all(|v| v.is_finite());
            if !finite {
                return Err(Error::NonFinite {
                    row: i,
                    column: "<in-memory observation>".into(),
                });
            }
        }

        // group by subject in order of first appearance
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut groups: Vec<Vec<&Observation<F>>> = Vec::new();
        let mut subject_ids = Vec::new();
        for obs in &observations {
            let g = *index.entry(obs.subject.as_str()).or_insert_with(|| {
                subject_ids.push(obs.subject.clone());
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push(obs);
        }
        for group in groups.iter_mut() {
            group.sort_by(|a, b| {
                a.time
                    .partial_cmp(&b.time)
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
        }

        let n_obs = observations.len();
        let mut t_orig = Array1::<F>::zeros(n_obs);
        let mut response = Array1::<F>::zeros(n_obs);
        let mut varying = Array2::<F>::zeros((n_obs, p));
        let mut constant = Array2::<F>::zeros((n_obs, q));
        let mut counts = Vec::with_capacity(groups.len());
        let mut row = 0;
        for group in &groups {
            counts.push(group.len());
            for obs in group {
                t_orig[row] = obs.time;
                response[row] = obs.response;
                for (k, &v) in obs.varying.iter().enumerate() {
                    varying[[row, k]] = v;
                }
                for (k, &v) in obs.constant.iter().enumerate() {
                    constant[[row, k]] = v;
                }
                row += 1;
            }
        }

        let time_map = TimeMap::from_times(t_orig.as_slice().unwrap());
        let t_mapped = t_orig.mapv(|t| time_map.forward(t));
        Ok(LongitudinalDataset {
            subject_ids,
            counts,
            t_orig,
            t_mapped,
            response,
            varying,
            constant,
            varying_names,
            constant_names,
            has_intercept,
            time_map,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.subject_ids.len()
    }

    pub fn n_obs(&self) -> usize {
        self.response.len()
    }

    /// Number of varying covariates (including any generated intercept).
    pub fn p(&self) -> usize {
        self.varying.ncols()
    }

    pub fn q(&self) -> usize {
        self.constant.ncols()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    /// Row range of subject `i` in the packed arrays.
    pub fn subject_range(&self, i: usize) -> std::ops::Range<usize> {
        let start: usize = self.counts[..i].iter().sum();
        start..start + self.counts[i]
    }

    pub fn times_original(&self) -> &Array1<F> {
        &self.t_orig
    }

    pub fn times_mapped(&self) -> &Array1<F> {
        &self.t_mapped
    }

    pub fn response(&self) -> &Array1<F> {
        &self.response
    }

    pub fn varying(&self) -> &Array2<F> {
        &self.varying
    }

    pub fn constant(&self) -> &Array2<F> {
        &self.constant
    }

    pub fn time_map(&self) -> TimeMap<F> {
        self.time_map
    }

    pub fn has_intercept(&self) -> bool {
        self.has_intercept
    }

    /// Names of the varying covariates, with the generated intercept
    /// labeled explicitly.
    pub fn varying_labels(&self) -> Vec<String> {
        let mut labels = Vec::with_capacity(self.p());
        if self.has_intercept {
            labels.push("(intercept)".to_string());
        }
        labels.extend(self.varying_names.iter().cloned());
        labels
    }

    pub fn constant_labels(&self) -> &[String] {
        &self.constant_names
    }
}

/// Read a dataset from CSV. Required columns: `subject`, `time`, `y`, plus
/// every covariate the model spec names; order free, header required.
pub fn load_csv<F: Scalar, P: AsRef<Path>>(
    path: P,
    spec: &ModelSpec,
) -> Result<LongitudinalDataset<F>> {
    let file = std::fs::File::open(path)?;
    load_csv_reader(file, spec)
}

/// [`load_csv`] over any reader.
pub fn load_csv_reader<F: Scalar, R: Read>(
    reader: R,
    spec: &ModelSpec,
) -> Result<LongitudinalDataset<F>> {
    spec.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let subject_col = col("subject")?;
    let time_col = col("time")?;
    let y_col = col("y")?;
    let varying_cols: Vec<usize> = spec
        .varying_columns
        .iter()
        .map(|c| col(c))
        .collect::<Result<_>>()?;
    let constant_cols: Vec<usize> = spec
        .constant_columns
        .iter()
        .map(|c| col(c))
        .collect::<Result<_>>()?;

    let parse = |record: &csv::StringRecord, idx: usize, name: &str, line: usize| -> Result<F> {
        let raw = record.get(idx).unwrap_or("");
        let v: f64 = raw.parse().map_err(|_| Error::Parse {
            row: line,
            column: name.to_string(),
            value: raw.to_string(),
        })?;
        if !v.is_finite() {
            return Err(Error::NonFinite {
                row: line,
                column: name.to_string(),
            });
        }
        Ok(F::cast(v))
    };

    let mut observations = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i + 2; // header is line 1
        let mut varying = Vec::with_capacity(spec.p());
        if spec.intercept_varying {
            varying.push(F::one());
        }
        for (idx, name) in varying_cols.iter().zip(&spec.varying_columns) {
            varying.push(parse(&record, *idx, name, line)?);
        }
        let mut constant = Vec::with_capacity(spec.q());
        for (idx, name) in constant_cols.iter().zip(&spec.constant_columns) {
            constant.push(parse(&record, *idx, name, line)?);
        }
        observations.push(Observation {
            subject: record.get(subject_col).unwrap_or("").to_string(),
            time: parse(&record, time_col, "time", line)?,
            response: parse(&record, y_col, "y", line)?,
            varying,
            constant,
        });
    }
    if observations.is_empty() {
        return Err(Error::EmptyInput);
    }
    LongitudinalDataset::from_observations(
        observations,
        spec.varying_columns.clone(),
        spec.constant_columns.clone(),
        spec.intercept_varying,
    )
}

/// Write a dataset back to CSV with times in original units. The generated
/// intercept column is not written.
pub fn write_csv<F: Scalar, P: AsRef<Path>>(ds: &LongitudinalDataset<F>, path: P) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv_writer(ds, file)
}

/// [`write_csv`] over any writer.
pub fn write_csv_writer<F: Scalar, W: Write>(ds: &LongitudinalDataset<F>, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["subject".to_string(), "time".to_string(), "y".to_string()];
    header.extend(ds.varying_names.iter().cloned());
    header.extend(ds.constant_names.iter().cloned());
    wtr.write_record(&header)?;
    let skip = usize::from(ds.has_intercept);
    let mut row = 0;
    for (s, &m) in ds.counts.iter().enumerate() {
        for _ in 0..m {
            let mut record = vec![
                ds.subject_ids[s].clone(),
                format_value(ds.t_orig[row]),
                format_value(ds.response[row]),
            ];
            for k in skip..ds.varying.ncols() {
                record.push(format_value(ds.varying[[row, k]]));
            }
            for k in 0..ds.constant.ncols() {
                record.push(format_value(ds.constant[[row, k]]));
            }
            wtr.write_record(&record)?;
            row += 1;
        }
    }
    wtr.flush()?;
    Ok(())
}

fn format_value<F: Scalar>(v: F) -> String {
    // shortest representation that round-trips
    format!("{}", v.to64())
}

/// Per-column observed range.
#[derive(Debug, Clone, Serialize)]
pub struct ColumnRange {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

/// Descriptive diagnostics for a dataset; never fails, never mutates.
#[derive(Debug, Clone, Serialize)]
pub struct DatasetReport {
    pub n_subjects: usize,
    pub n_obs: usize,
    pub m_min: usize,
    pub m_max: usize,
    pub single_obs_subjects: usize,
    pub time_min: f64,
    pub time_max: f64,
    pub covariate_ranges: Vec<ColumnRange>,
    pub warnings: Vec<String>,
}

/// Summarize a dataset and flag structural quirks that degrade the
/// estimators: subjects with one observation contribute nothing to
/// within-subject correlation estimates, and constant varying-covariates
/// make the design rank deficient together with an intercept.
pub fn validate<F: Scalar>(ds: &LongitudinalDataset<F>) -> DatasetReport {
    let mut warnings = Vec::new();
    let m_min = ds.counts().iter().copied().min().unwrap_or(0);
    let m_max = ds.counts().iter().copied().max().unwrap_or(0);
    let singles = ds.counts().iter().filter(|&&m| m == 1).count();
    if singles > 0 {
        warnings.push(format!(
            "single-observation subjects present ({singles}); intra-subject correlation cannot use them"
        ));
    }
    let mut ranges = Vec::new();
    let labels = ds.varying_labels();
    for (k, label) in labels.iter().enumerate() {
        let col = ds.varying().column(k);
        let min = col.iter().fold(F::infinity(), |m, v| m.min(*v));
        let max = col.iter().fold(F::neg_infinity(), |m, v| m.max(*v));
        let generated_intercept = ds.has_intercept() && k == 0;
        if !generated_intercept && min == max {
            warnings.push(format!(
                "degenerate varying covariate `{label}`: constant at {}",
                min.to64()
            ));
        }
        ranges.push(ColumnRange {
            name: label.clone(),
            min: min.to64(),
            max: max.to64(),
        });
    }
    for (k, label) in ds.constant_labels().iter().enumerate() {
        let col = ds.constant().column(k);
        let min = col.iter().fold(F::infinity(), |m, v| m.min(*v));
        let max = col.iter().fold(F::neg_infinity(), |m, v| m.max(*v));
        ranges.push(ColumnRange {
            name: label.clone(),
            min: min.to64(),
            max: max.to64(),
        });
    }
    DatasetReport {
        n_subjects: ds.n_subjects(),
        n_obs: ds.n_obs(),
        m_min,
        m_max,
        single_obs_subjects: singles,
        time_min: ds
            .times_original()
            .iter()
            .fold(f64::INFINITY, |m, v| m.min(v.to64())),
        time_max: ds
            .times_original()
            .iter()
            .fold(f64::NEG_INFINITY, |m, v| m.max(v.to64())),
        covariate_ranges: ranges,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec_x1_z1() -> ModelSpec {
        ModelSpec {
            varying_columns: vec!["x1".into()],
            constant_columns: vec!["z1".into()],
            intercept_varying: false,
        }
    }

    const SMALL_CSV: &str = "\
subject,time,y,x1,z1
a,0,1.0,0.5,1
a,5,2.0,0.6,1
a,10,3.0,0.7,1
b,10,4.0,0.8,0
b,0,5.0,0.9,0
b,5,6.0,1.0,0
";

    #[test]
    fn loads_groups_and_sorts() {
        let ds = load_csv_reader::<f64, _>(SMALL_CSV.as_bytes(), &spec_x1_z1()).unwrap();
        assert_eq!(ds.n_subjects(), 2);
        assert_eq!(ds.counts(), &[3, 3]);
        assert_eq!(ds.n_obs(), 6);
        assert_eq!(ds.p(), 1);
        assert_eq!(ds.q(), 1);
        // subject b's rows were out of order in the file
        let r = ds.subject_range(1);
        assert_eq!(r, 3..6);
        assert_eq!(ds.times_original()[3], 0.0);
        assert_eq!(ds.times_original()[4], 5.0);
        assert_eq!(ds.times_original()[5], 10.0);
        assert_eq!(ds.response()[3], 5.0);
        // times {0,5,10} map onto {0,0.5,1}
        assert_abs_diff_eq!(ds.times_mapped()[0], 0.0);
        assert_abs_diff_eq!(ds.times_mapped()[1], 0.5);
        assert_abs_diff_eq!(ds.times_mapped()[2], 1.0);
    }

    #[test]
    fn missing_column_is_reported() {
        let spec = ModelSpec {
            varying_columns: vec!["x9".into()],
            constant_columns: vec![],
            intercept_varying: false,
        };
        let err = load_csv_reader::<f64, _>(SMALL_CSV.as_bytes(), &spec).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(name) if name == "x9"));
    }

    #[test]
    fn parse_error_names_the_row() {
        let csv = "subject,time,y,x1,z1\na,0,1.0,0.5,1\na,1,2.0,NA,1\n";
        let err = load_csv_reader::<f64, _>(csv.as_bytes(), &spec_x1_z1()).unwrap_err();
        match err {
            Error::Parse { row, column, value } => {
                assert_eq!(row, 3); // header is line 1
                assert_eq!(column, "x1");
                assert_eq!(value, "NA");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_rejected() {
        let err =
            load_csv_reader::<f64, _>("subject,time,y,x1,z1\n".as_bytes(), &spec_x1_z1())
                .unwrap_err();
        assert!(matches!(err, Error::EmptyInput));
    }

    #[test]
    fn intercept_prepends_ones() {
        let spec = ModelSpec {
            varying_columns: vec!["x1".into()],
            constant_columns: vec![],
            intercept_varying: true,
        };
        let ds = load_csv_reader::<f64, _>(SMALL_CSV.as_bytes(), &spec).unwrap();
        assert_eq!(ds.p(), 2);
        assert!(ds.varying().column(0).iter().all(|&v| v == 1.0));
        assert_eq!(ds.varying_labels(), vec!["(intercept)", "x1"]);
    }

    #[test]
    fn model_spec_rejects_overlap_and_reserved() {
        let spec = ModelSpec {
            varying_columns: vec!["x1".into()],
            constant_columns: vec!["x1".into()],
            intercept_varying: false,
        };
        assert!(spec.validate().is_err());
        let spec = ModelSpec {
            varying_columns: vec!["time".into()],
            constant_columns: vec![],
            intercept_varying: false,
        };
        assert!(spec.validate().is_err());
        let spec = ModelSpec {
            varying_columns: vec![],
            constant_columns: vec!["z1".into()],
            intercept_varying: false,
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn round_trip_through_csv() {
        let ds = load_csv_reader::<f64, _>(SMALL_CSV.as_bytes(), &spec_x1_z1()).unwrap();
        let mut buf = Vec::new();
        write_csv_writer(&ds, &mut buf).unwrap();
        let ds2 = load_csv_reader::<f64, _>(buf.as_slice(), &spec_x1_z1()).unwrap();
        assert_eq!(ds.subject_ids(), ds2.subject_ids());
        assert_eq!(ds.counts(), ds2.counts());
        assert_eq!(ds.times_original(), ds2.times_original());
        assert_eq!(ds.response(), ds2.response());
        assert_eq!(ds.varying(), ds2.varying());
        assert_eq!(ds.constant(), ds2.constant());
    }

    #[test]
    fn time_map_is_order_preserving_and_clamped() {
        let map = TimeMap { t_min: 2.0, t_max: 12.0 };
        assert!(map.forward(3.0) < map.forward(4.0));
        assert_abs_diff_eq!(map.forward(2.0), 0.0);
        assert_abs_diff_eq!(map.forward(12.0), 1.0);
        assert_abs_diff_eq!(map.inverse(map.forward(7.3)), 7.3, epsilon = 1e-12);
        // overshoot clamps rather than extrapolates
        assert_eq!(map.forward(12.5), 1.0);
        // degenerate range maps everything to 0
        let flat = TimeMap { t_min: 4.0, t_max: 4.0 };
        assert_eq!(flat.forward(4.0), 0.0);
        assert_eq!(flat.inverse(0.0), 4.0);
    }

    #[test]
    fn validate_reports_structure() {
        let csv = "\
subject,time,y,x1,z1
a,0,1.0,2.0,1
b,0,1.5,2.0,0
b,1,2.0,2.0,0
b,2,2.5,2.0,0
c,0,0.5,2.0,1
c,1,0.75,2.0,1
";
        let ds = load_csv_reader::<f64, _>(csv.as_bytes(), &spec_x1_z1()).unwrap();
        let report = validate(&ds);
        assert_eq!(report.n_subjects, 3);
        assert_eq!(report.m_min, 1);
        assert_eq!(report.m_max, 3);
        assert_eq!(report.single_obs_subjects, 1);
        assert!(report
            .warnings
            .iter()
            .any(|w| w.contains("single-observation")));
        assert!(report
            .warnings
            .iter()
            .any(|w| w.contains("degenerate varying covariate")));

        let clean = load_csv_reader::<f64, _>(SMALL_CSV.as_bytes(), &spec_x1_z1()).unwrap();
        let report = validate(&clean);
        assert!(report.warnings.is_empty());
    }
}
