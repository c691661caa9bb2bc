//! Series ingestion, chronological splits and synthetic generators.
//!
//! CSV files are UTF-8, comma separated, with a header row. An optional
//! integer `time` column is honored; otherwise the row index is used.

use std::ops::Range;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecasting::ForecastSet;
use crate::rng::{self, stream};

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesBundle {
    pub name: String,
    pub times: Vec<i64>,
    pub target: Vec<f64>,
    /// Row-major `T x D_u`.
    pub exogenous: Option<Vec<Vec<f64>>>,
    pub feature_names: Vec<String>,
}

impl SeriesBundle {
    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn exogenous_dim(&self) -> usize {
        self.exogenous.as_ref().and_then(|x| x.first()).map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSpec {
    pub target_column: String,
    #[serde(default)]
    pub feature_columns: Vec<String>,
    #[serde(default)]
    pub prediction_column: Option<String>,
    /// Horizon the prediction column was produced at.
    #[serde(default = "one")]
    pub horizon: usize,
}

fn one() -> usize {
    1
}

impl CsvSpec {
    pub fn target(column: impl Into<String>) -> Self {
        Self {
            target_column: column.into(),
            feature_columns: Vec::new(),
            prediction_column: None,
            horizon: 1,
        }
    }
}

const TIME_COLUMN: &str = "time";

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "NaN" | "nan" | "null")
}

fn column_index(headers: &[String], name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::MissingColumn {
            name: name.to_owned(),
            available: headers.to_vec(),
        })
}

/// Reads a series (and, with a prediction column, its forecasts).
///
/// Rows missing any required value are dropped and the count is logged.
pub fn load_csv(path: impl AsRef<Path>, spec: &CsvSpec) -> Result<(SeriesBundle, Option<ForecastSet>)> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_owned()).collect();

    let target_idx = column_index(&headers, &spec.target_column)?;
    let feature_idx = spec
        .feature_columns
        .iter()
        .map(|c| column_index(&headers, c))
        .collect::<Result<Vec<_>>>()?;
    let pred_idx = spec
        .prediction_column
        .as_deref()
        .map(|c| column_index(&headers, c))
        .transpose()?;
    let time_idx = headers.iter().position(|h| h == TIME_COLUMN);

    let parse = |row: usize, col: usize, cell: &str| -> Result<Option<f64>> {
        if is_missing(cell) {
            return Ok(None);
        }
        match cell.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Some(v)),
            _ => Err(Error::Parse {
                row,
                column: headers[col].clone(),
                value: cell.to_owned(),
            }),
        }
    };

    let mut times = Vec::new();
    let mut target = Vec::new();
    let mut features: Vec<Vec<f64>> = Vec::new();
    let mut preds = Vec::new();
    let mut dropped = 0usize;

    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let cell = |i: usize| record.get(i).unwrap_or("");
        let y = parse(row, target_idx, cell(target_idx))?;
        let xs = feature_idx
            .iter()
            .map(|&i| parse(row, i, cell(i)))
            .collect::<Result<Vec<_>>>()?;
        let p = pred_idx.map(|i| parse(row, i, cell(i))).transpose()?;
        let time = match time_idx {
            Some(i) => cell(i).trim().parse::<i64>().map_err(|_| Error::Parse {
                row,
                column: TIME_COLUMN.into(),
                value: cell(i).to_owned(),
            })?,
            None => row as i64,
        };
        let (Some(y), Some(xs)) = (y, xs.into_iter().collect::<Option<Vec<f64>>>()) else {
            dropped += 1;
            continue;
        };
        if let Some(None) = p {
            dropped += 1;
            continue;
        }
        times.push(time);
        target.push(y);
        features.push(xs);
        if let Some(Some(p)) = p {
            preds.push(p);
        }
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} rows with missing values from {}", path.display());
    }

    let forecasts = match pred_idx {
        Some(_) => Some(ForecastSet::new(times.clone(), target.clone(), preds, spec.horizon)?),
        None => None,
    };
    let bundle = SeriesBundle {
        name: path
            .file_stem()
            .map_or_else(|| "series".into(), |s| s.to_string_lossy().into_owned()),
        times,
        target,
        exogenous: (!feature_idx.is_empty()).then_some(features),
        feature_names: spec.feature_columns.clone(),
    };
    Ok((bundle, forecasts))
}

/// Writes `time,<target>[,features…][,<prediction>]`.
pub fn write_csv(
    path: impl AsRef<Path>,
    bundle: &SeriesBundle,
    target_column: &str,
    predictions: Option<(&str, &[f64])>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![TIME_COLUMN.to_owned(), target_column.to_owned()];
    header.extend(bundle.feature_names.iter().cloned());
    if let Some((name, _)) = predictions {
        header.push(name.to_owned());
    }
    w.write_record(&header)?;
    for i in 0..bundle.len() {
        let mut rec = vec![bundle.times[i].to_string(), bundle.target[i].to_string()];
        if let Some(x) = &bundle.exogenous {
            rec.extend(x[i].iter().map(f64::to_string));
        }
        if let Some((_, p)) = predictions {
            rec.push(p[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub cal_frac: f64,
    pub test_frac: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.4,
            cal_frac: 0.4,
            test_frac: 0.2,
        }
    }
}

impl SplitSpec {
    pub fn new(train_frac: f64, cal_frac: f64, test_frac: f64) -> Self {
        Self {
            train_frac,
            cal_frac,
            test_frac,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train_frac, self.cal_frac, self.test_frac];
        if parts.iter().any(|f| !(*f >= 0.0)) {
            return Err(Error::Config(format!("split fractions must be nonnegative: {parts:?}")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions must sum to 1: {parts:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Range<usize>,
    pub calibration: Range<usize>,
    pub test: Range<usize>,
}

/// Contiguous chronological train/calibration/test ranges; the floor-rounding
/// remainder goes to test.
pub fn split_series(len: usize, spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    if len < 5 {
        return Err(Error::EmptySplit("series needs at least 5 points"));
    }
    let n = len as f64;
    let b1 = ((n * spec.train_frac) + 1e-9).floor() as usize;
    let b2 = ((n * (spec.train_frac + spec.cal_frac)) + 1e-9).floor() as usize;
    let (b1, b2) = (b1.min(len), b2.min(len));
    if b1 == 0 {
        return Err(Error::EmptySplit("train"));
    }
    if b2 <= b1 {
        return Err(Error::EmptySplit("calibration"));
    }
    if b2 >= len {
        return Err(Error::EmptySplit("test"));
    }
    Ok(Splits {
        train: 0..b1,
        calibration: b1..b2,
        test: b2..len,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticKind {
    /// `y_t = a y_{t-1} + sigma e_t`
    Ar1 { a: f64, sigma: f64 },
    /// AR(1) whose noise scale alternates between `sigma_lo` and `sigma_hi`
    /// every `period` steps, starting low. The regime (0 = low, 1 = high)
    /// is exported as an exogenous column.
    RegimeSwitchHetero {
        a: f64,
        sigma_lo: f64,
        sigma_hi: f64,
        period: usize,
    },
}

impl SyntheticKind {
    pub fn ar1() -> Self {
        SyntheticKind::Ar1 { a: 0.8, sigma: 1.0 }
    }

    pub fn regime_switch() -> Self {
        SyntheticKind::RegimeSwitchHetero {
            a: 0.8,
            sigma_lo: 0.1,
            sigma_hi: 1.0,
            period: 200,
        }
    }

    /// Noise scale at step `t`, and whether it belongs to the high regime.
    pub fn noise_at(&self, t: usize) -> (f64, bool) {
        match *self {
            SyntheticKind::Ar1 { sigma, .. } => (sigma, false),
            SyntheticKind::RegimeSwitchHetero {
                sigma_lo,
                sigma_hi,
                period,
                ..
            } => {
                let high = (t / period.max(1)) % 2 == 1;
                (if high { sigma_hi } else { sigma_lo }, high)
            }
        }
    }
}

pub fn gen_synthetic(kind: SyntheticKind, length: usize, seed: u64) -> Result<SeriesBundle> {
    if length == 0 {
        return Err(Error::Config("synthetic length must be at least 1".into()));
    }
    let (a, name) = match kind {
        SyntheticKind::Ar1 { a, sigma } => {
            if !(sigma >= 0.0) {
                return Err(Error::Config(format!("noise scale must be nonnegative, got {sigma}")));
            }
            (a, "ar1")
        }
        SyntheticKind::RegimeSwitchHetero {
            a,
            sigma_lo,
            sigma_hi,
            period,
        } => {
            if !(sigma_lo >= 0.0 && sigma_hi >= 0.0) || period == 0 {
                return Err(Error::Config(
                    "regime noise scales must be nonnegative and period positive".into(),
                ));
            }
            (a, "regime_switch_hetero")
        }
    };
    if !(a.abs() < 1.0) {
        return Err(Error::NonStationary(a));
    }
    let mut g = rng::seeded(seed, stream::SYNTHETIC);
    let mut target = Vec::with_capacity(length);
    let mut regime = Vec::with_capacity(length);
    let mut y = 0.0;
    for t in 0..length {
        let (sigma, high) = kind.noise_at(t);
        if t > 0 {
            let e: f64 = StandardNormal.sample(&mut g);
            y = a * y + sigma * e;
        }
        target.push(y);
        regime.push(vec![if high { 1.0 } else { 0.0 }]);
    }
    let regime_switch = matches!(kind, SyntheticKind::RegimeSwitchHetero { .. });
    Ok(SeriesBundle {
        name: name.into(),
        times: (0..length as i64).collect(),
        target,
        exogenous: regime_switch.then_some(regime),
        feature_names: if regime_switch {
            vec!["regime".into()]
        } else {
            Vec::new()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn split_examples() {
        let s = split_series(100, &SplitSpec::default()).unwrap();
        assert_eq!((s.train.len(), s.calibration.len(), s.test.len()), (40, 40, 20));
        let s = split_series(101, &SplitSpec::default()).unwrap();
        assert_eq!((s.train.len(), s.calibration.len(), s.test.len()), (40, 40, 21));
        assert!(split_series(100, &SplitSpec::new(1.0, 0.0, 0.0)).is_err());
        assert!(split_series(4, &SplitSpec::default()).is_err());
        assert!(split_series(100, &SplitSpec::new(0.5, 0.5, 0.5)).is_err());
    }

    #[test]
    fn splits_are_chronological_and_exhaustive() {
        for len in [5, 17, 1000, 12345] {
            let s = split_series(len, &SplitSpec::new(0.5, 0.3, 0.2)).unwrap();
            assert_eq!(s.train.start, 0);
            assert_eq!(s.train.end, s.calibration.start);
            assert_eq!(s.calibration.end, s.test.start);
            assert_eq!(s.test.end, len);
        }
    }

    #[test]
    fn synthetic_is_deterministic_and_noise_free_when_sigma_zero() {
        let a = gen_synthetic(SyntheticKind::ar1(), 500, 3).unwrap();
        let b = gen_synthetic(SyntheticKind::ar1(), 500, 3).unwrap();
        assert_eq!(a, b);
        let z = gen_synthetic(SyntheticKind::Ar1 { a: 0.5, sigma: 0.0 }, 50, 1).unwrap();
        assert!(z.target.iter().all(|&y| y == 0.0));
        let z = gen_synthetic(
            SyntheticKind::RegimeSwitchHetero {
                a: 0.5,
                sigma_lo: 0.0,
                sigma_hi: 0.0,
                period: 5,
            },
            20,
            1,
        )
        .unwrap();
        assert!(z.target.iter().all(|&y| y == 0.0));
        let regimes: Vec<f64> = z.exogenous.unwrap().iter().map(|r| r[0]).collect();
        assert_eq!(&regimes[..11], &[0., 0., 0., 0., 0., 1., 1., 1., 1., 1., 0.]);
    }

    #[test]
    fn synthetic_rejects_unit_root() {
        assert!(matches!(
            gen_synthetic(SyntheticKind::Ar1 { a: 1.0, sigma: 1.0 }, 10, 0),
            Err(Error::NonStationary(_))
        ));
    }

    #[test]
    fn ar1_stationary_moments() {
        let s = gen_synthetic(SyntheticKind::ar1(), 100_000, 42).unwrap().target;
        let n = s.len() as f64;
        let mean = s.iter().sum::<f64>() / n;
        let var = s.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
        let expected = 1.0 / (1.0 - 0.64);
        assert!((var / expected - 1.0).abs() < 0.05, "{var}");
        let lag1 = s.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / n / var;
        assert!((lag1 - 0.8).abs() < 0.02, "{lag1}");
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let bundle = SeriesBundle {
            name: "s".into(),
            times: vec![0, 1, 2],
            target: vec![1.5, -0.25, 3.0e-7],
            exogenous: Some(vec![vec![1.0], vec![2.0], vec![0.1]]),
            feature_names: vec!["u".into()],
        };
        write_csv(&path, &bundle, "y", Some(("yhat", &[1.0, 0.0, 0.0]))).unwrap();
        let spec = CsvSpec {
            target_column: "y".into(),
            feature_columns: vec!["u".into()],
            prediction_column: Some("yhat".into()),
            horizon: 1,
        };
        let (read, fc) = load_csv(&path, &spec).unwrap();
        assert_eq!(read, bundle);
        assert_eq!(fc.unwrap().residuals, vec![0.5, -0.25, 3.0e-7]);
    }

    #[test]
    fn csv_errors_and_missing_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "a,b\n1,2\n,3\n4,5").unwrap();
        drop(f);
        let err = load_csv(&path, &CsvSpec::target("y")).unwrap_err();
        match err {
            Error::MissingColumn { available, .. } => assert_eq!(available, vec!["a", "b"]),
            other => panic!("{other}"),
        }
        let (b, _) = load_csv(&path, &CsvSpec::target("a")).unwrap();
        assert_eq!(b.target, vec![1.0, 4.0]);
        assert_eq!(b.times, vec![0, 2]);

        let path = dir.path().join("junk.csv");
        std::fs::write(&path, "y\n1\nabc\n").unwrap();
        assert!(matches!(
            load_csv(&path, &CsvSpec::target("y")),
            Err(Error::Parse { row: 1, .. })
        ));
    }

    #[test]
    fn csv_prediction_residual() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        std::fs::write(&path, "y,yhat\n3,1\n").unwrap();
        let spec = CsvSpec {
            prediction_column: Some("yhat".into()),
            ..CsvSpec::target("y")
        };
        let (_, fc) = load_csv(&path, &spec).unwrap();
        assert_eq!(fc.unwrap().residuals, vec![2.0]);
    }
}
