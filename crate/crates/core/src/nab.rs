//! NAB CPU-utilization series: parsing, piecewise-constant reference means,
//! and side-by-side policy evaluation.
//!
//! The data file is not shipped. [`locate_nab_file`] looks at `$NAB_CSV`
//! and then `data/ec2_cpu_utilization_ac20cd.csv` under the workspace root.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::harness::{self, HarnessError, Policy, RegretReport};
use crate::types::{Environment, RunTrace, TimeSeries, ValidationError};

pub const NAB_FILE_NAME: &str = "ec2_cpu_utilization_ac20cd.csv";
pub const DEFAULT_CHANGES: [usize; 4] = [377, 420, 592, 3575];

#[derive(Debug, Error)]
pub enum NabError {
    #[error("row {row}: {message}")]
    Malformed { row: u64, message: String },
    #[error("row {row}: missing value column")]
    MissingColumn { row: u64 },
    #[error("row {row}: value {value:?} is not a finite number")]
    NonNumeric { row: u64, value: String },
    #[error("file has no data rows")]
    Empty,
    #[error("no policies to evaluate")]
    NoPolicies,
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NabSeries {
    pub timestamps: Vec<String>,
    pub values: Vec<f64>,
}

impl NabSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_time_series(&self) -> Result<TimeSeries, ValidationError> {
        TimeSeries::scalar(self.values.clone())
    }
}

/// Parses a header-plus-rows CSV, taking timestamps from column 1 and
/// values from column 2. Row numbers in errors count the header as row 1.
pub fn parse_nab_csv(bytes: &[u8]) -> Result<NabSeries, NabError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(bytes);
    let mut series = NabSeries {
        timestamps: Vec::new(),
        values: Vec::new(),
    };
    for (i, record) in reader.records().enumerate() {
        let fallback_row = i as u64 + 2;
        let record = record.map_err(|e| NabError::Malformed {
            row: e.position().map_or(fallback_row, |p| p.line()),
            message: e.to_string(),
        })?;
        let row = record.position().map_or(fallback_row, |p| p.line());
        let raw = record.get(1).ok_or(NabError::MissingColumn { row })?;
        let value = raw
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| NabError::NonNumeric {
                row,
                value: raw.to_string(),
            })?;
        series.timestamps.push(record[0].to_string());
        series.values.push(value);
    }
    if series.is_empty() {
        return Err(NabError::Empty);
    }
    Ok(series)
}

pub fn load_nab_csv(path: &Path) -> Result<NabSeries, NabError> {
    let bytes = std::fs::read(path).map_err(|source| NabError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_nab_csv(&bytes)
}

/// `$NAB_CSV` if set and present, else `<workspace>/data/<file>`.
pub fn locate_nab_file() -> Option<PathBuf> {
    if let Some(p) = std::env::var_os("NAB_CSV").map(PathBuf::from) {
        if p.is_file() {
            return Some(p);
        }
    }
    let workspace = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let p = workspace.join("data").join(NAB_FILE_NAME);
    p.is_file().then_some(p)
}

/// Environment whose segment means are the empirical averages of the
/// series between consecutive change indices.
pub fn reference_means(
    series: &NabSeries,
    change_indices: &[usize],
    sigma: f64,
) -> Result<Environment, NabError> {
    let horizon = series.len();
    // validates the indices before any slicing
    let layout = Environment::new(
        change_indices.to_vec(),
        vec![0.0; change_indices.len() + 1],
        horizon,
        sigma,
        None,
    )?;
    let means = (0..=layout.num_changes())
        .map(|j| {
            let seg = &series.values[layout.boundary(j) - 1..layout.boundary(j + 1) - 1];
            seg.iter().sum::<f64>() / seg.len() as f64
        })
        .collect();
    Ok(Environment::new(
        change_indices.to_vec(),
        means,
        horizon,
        sigma,
        None,
    )?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NabEvaluation {
    pub policy: String,
    pub trace: RunTrace,
    pub report: RegretReport,
}

/// Runs every policy on the series against the reference means (σ = 1 in
/// the reference; each policy carries its own σ).
pub fn evaluate_on_nab(
    series: &NabSeries,
    change_indices: &[usize],
    policies: &[Policy],
) -> Result<Vec<NabEvaluation>, NabError> {
    if policies.is_empty() {
        return Err(NabError::NoPolicies);
    }
    let env = reference_means(series, change_indices, 1.0)?;
    let stream = series.to_time_series()?;
    policies
        .iter()
        .map(|p| {
            let trace = p.run(&stream, &env)?;
            let report = harness::regret(&trace, &env, true)?;
            Ok(NabEvaluation {
                policy: p.name(),
                trace,
                report,
            })
        })
        .collect()
}

/// `t,policy,prediction,cum_regret,alarm`, grouped by policy.
pub fn evaluations_to_csv(evals: &[NabEvaluation]) -> String {
    let mut out = String::from("t,policy,prediction,cum_regret,alarm\n");
    for e in evals {
        let steps = e.report.per_step.as_deref().unwrap_or(&[]);
        for (o, cum) in e.trace.outcomes.iter().zip(steps) {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                o.time,
                e.policy,
                o.prediction,
                cum,
                u8::from(o.alarm)
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::DetectorConfig;

    fn synthetic(n: usize) -> NabSeries {
        let values: Vec<f64> = (0..n)
            .map(|i| {
                let level = match i {
                    0..=375 => 2.0,
                    376..=418 => 9.0,
                    419..=590 => 3.0,
                    591..=3573 => 1.5,
                    _ => 6.0,
                };
                level + 0.4 * ((i * 7919 % 101) as f64 / 101.0 - 0.5)
            })
            .collect();
        NabSeries {
            timestamps: (0..n).map(|i| format!("2014-01-01 00:{i:05}")).collect(),
            values,
        }
    }

    #[test]
    fn parse_examples() {
        let s = parse_nab_csv(b"ts,value\n2014-01-01,5.0").unwrap();
        assert_eq!(s.values, vec![5.0]);
        assert_eq!(s.timestamps, vec!["2014-01-01".to_string()]);
        let s = parse_nab_csv(b"timestamp,value\n\"a\",1\nb, 2.5 \r\nc,-3e-1\n").unwrap();
        assert_eq!(s.values, vec![1.0, 2.5, -0.3]);
        match parse_nab_csv(b"ts,value\na,1\nb\n") {
            Err(NabError::MissingColumn { row }) => assert_eq!(row, 3),
            other => panic!("{other:?}"),
        }
        match parse_nab_csv(b"ts,value\na,1\nb,2\nc,x\n") {
            Err(NabError::NonNumeric { row, .. }) => assert_eq!(row, 4),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_nab_csv(b"ts,value\nnan_row,NaN\n"),
            Err(NabError::NonNumeric { .. })
        ));
        assert!(matches!(parse_nab_csv(b"ts,value\n"), Err(NabError::Empty)));
    }

    #[test]
    fn reference_examples() {
        let s = parse_nab_csv(b"t,v\na,1\nb,2\nc,3\nd,6\n").unwrap();
        let env = reference_means(&s, &[], 1.0).unwrap();
        assert_eq!(env.segment_means(), &[vec![3.0]]);
        let env = reference_means(&s, &[3], 1.0).unwrap();
        assert_eq!(env.segment_mean(0), 1.5);
        assert_eq!(env.segment_mean(1), 4.5);
        assert!(reference_means(&s, &[5], 1.0).is_err());
        assert!(reference_means(&s, &[1], 1.0).is_err());
        assert!(reference_means(&s, &[3, 3], 1.0).is_err());
        let flat = NabSeries {
            timestamps: vec![String::new(); 4000],
            values: vec![4.25; 4000],
        };
        let env = reference_means(&flat, &DEFAULT_CHANGES, 1.0).unwrap();
        assert!(env.segment_means().iter().all(|m| m[0] == 4.25));
    }

    #[test]
    fn reference_preserves_total() {
        let s = synthetic(4032);
        let env = reference_means(&s, &DEFAULT_CHANGES, 1.0).unwrap();
        let weighted: f64 = (0..=env.num_changes())
            .map(|j| env.segment_len(j) as f64 * env.segment_mean(j))
            .sum();
        let total: f64 = s.values.iter().sum();
        assert!((weighted - total).abs() <= 1e-6 * total.abs());
    }

    #[test]
    fn evaluation_is_deterministic() {
        let s = synthetic(4032);
        let cfg = DetectorConfig::new(1.0, 0.05).unwrap();
        let policies = [
            Policy::Atc(cfg),
            Policy::SlidingWindow(30),
            Policy::DiscountedMean(0.98),
            Policy::Oracle,
        ];
        let a = evaluate_on_nab(&s, &DEFAULT_CHANGES, &policies).unwrap();
        let b = evaluate_on_nab(&s, &DEFAULT_CHANGES, &policies).unwrap();
        let csv = evaluations_to_csv(&a);
        assert_eq!(csv, evaluations_to_csv(&b));
        assert_eq!(csv.lines().count(), 1 + 4 * 4032);
        assert_eq!(a[3].report.cumulative_regret, 0.0);
        assert!(evaluate_on_nab(&s, &DEFAULT_CHANGES, &[]).is_err());
    }
}
