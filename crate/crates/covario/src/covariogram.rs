//! The universal estimator output: ordered lags with values and pair counts.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CovarioError, Result};

/// What the values of an [`EmpiricalCovariogram`] measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovKind {
    Covariance,
    Semivariogram,
    Correlation,
}

impl std::fmt::Display for CovKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CovKind::Covariance => "covariance",
            CovKind::Semivariogram => "semivariogram",
            CovKind::Correlation => "correlation",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for CovKind {
    type Err = CovarioError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "covariance" => Ok(CovKind::Covariance),
            "semivariogram" => Ok(CovKind::Semivariogram),
            "correlation" => Ok(CovKind::Correlation),
            other => Err(CovarioError::InvalidInput(format!("unknown kind {other:?}"))),
        }
    }
}

/// Estimated covariance, semivariogram, or correlation values over
/// increasing lags. Lag 0 is always present; empty bins are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCovariogram {
    kind: CovKind,
    lags: Vec<f64>,
    values: Vec<f64>,
    counts: Vec<u64>,
}

impl EmpiricalCovariogram {
    pub fn new(kind: CovKind, lags: Vec<f64>, values: Vec<f64>, counts: Vec<u64>) -> Result<Self> {
        if lags.is_empty() || lags.len() != values.len() || lags.len() != counts.len() {
            return Err(CovarioError::InvalidInput(
                "lags, values and counts must be nonempty and of equal length".into(),
            ));
        }
        if lags[0] != 0.0 {
            return Err(CovarioError::InvalidInput("lag 0 must be present".into()));
        }
        if !lags.windows(2).all(|w| w[1] > w[0]) {
            return Err(CovarioError::InvalidInput("lags must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CovarioError::InvalidInput("non-finite value".into()));
        }
        if kind == CovKind::Correlation && (values[0] - 1.0).abs() > 1e-12 {
            return Err(CovarioError::InvalidInput(
                "correlation must equal 1 at lag 0".into(),
            ));
        }
        Ok(Self { kind, lags, values, counts })
    }

    pub fn kind(&self) -> CovKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.lags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lags.is_empty()
    }

    pub fn lags(&self) -> &[f64] {
        &self.lags
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn value_at_lag0(&self) -> f64 {
        self.values[0]
    }

    /// Step of the arithmetic lag progression, or an error when lags are not
    /// equally spaced from 0.
    pub fn arithmetic_step(&self) -> Result<f64> {
        if self.len() < 2 {
            return Ok(0.0);
        }
        let step = self.lags[1] - self.lags[0];
        let ok = self
            .lags
            .iter()
            .enumerate()
            .all(|(k, &lag)| (lag - step * k as f64).abs() <= 1e-9 * step.max(1.0) * (k.max(1) as f64));
        if ok {
            Ok(step)
        } else {
            Err(CovarioError::NonArithmeticLags)
        }
    }

    /// Same lags and counts, values transformed pointwise.
    pub fn map_values<F: Fn(f64, f64) -> f64>(&self, kind: CovKind, f: F) -> Result<Self> {
        let values = self.lags.iter().zip(&self.values).map(|(&l, &v)| f(l, v)).collect();
        Self::new(kind, self.lags.clone(), values, self.counts.clone())
    }

    /// Writes CSV rows `lag,value,count,kind`; numbers round-trip exactly.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["lag", "value", "count", "kind"])?;
        for i in 0..self.len() {
            wtr.write_record([
                self.lags[i].to_string(),
                self.values[i].to_string(),
                self.counts[i].to_string(),
                self.kind.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if headers != ["lag", "value", "count", "kind"] {
            return Err(CovarioError::InvalidInput(format!(
                "expected header lag,value,count,kind, got {headers:?}"
            )));
        }
        let (mut lags, mut values, mut counts) = (Vec::new(), Vec::new(), Vec::new());
        let mut kind: Option<CovKind> = None;
        for record in rdr.records() {
            let record = record?;
            lags.push(parse(&record[0])?);
            values.push(parse(&record[1])?);
            counts.push(
                record[2]
                    .parse::<u64>()
                    .map_err(|_| CovarioError::InvalidInput(format!("bad count {:?}", &record[2])))?,
            );
            let row_kind: CovKind = record[3].parse()?;
            match kind {
                None => kind = Some(row_kind),
                Some(k) if k == row_kind => {}
                Some(_) => {
                    return Err(CovarioError::InvalidInput("mixed kinds in one file".into()))
                }
            }
        }
        let kind = kind.ok_or_else(|| CovarioError::InvalidInput("empty covariogram file".into()))?;
        Self::new(kind, lags, values, counts)
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

fn parse(field: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| CovarioError::InvalidInput(format!("cannot parse number {field:?}")))
}

/// Evaluates an empirical covariogram at arbitrary distances.
///
/// Distances within one bin half-width of estimated lags take the mean of
/// those values; gaps fall back to linear interpolation between the adjacent
/// lags, and distances beyond the last lag evaluate to zero.
#[derive(Debug, Clone)]
pub struct CovariogramLookup {
    lags: Vec<f64>,
    values: Vec<f64>,
    half_width: f64,
}

impl CovariogramLookup {
    pub fn new(cov: &EmpiricalCovariogram, half_width: Option<f64>) -> Self {
        let half_width = half_width.unwrap_or_else(|| {
            cov.lags()
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::INFINITY, f64::min)
                / 2.0
        });
        Self { lags: cov.lags().to_vec(), values: cov.values().to_vec(), half_width }
    }

    pub fn value(&self, distance: f64) -> f64 {
        let d = distance.abs();
        let lo = self.lags.partition_point(|&l| l < d - self.half_width);
        let hi = self.lags.partition_point(|&l| l <= d + self.half_width);
        if hi > lo {
            let slice = &self.values[lo..hi];
            return slice.iter().sum::<f64>() / slice.len() as f64;
        }
        let last = *self.lags.last().unwrap();
        if d > last {
            return 0.0;
        }
        // lo == hi: d sits strictly between bins; interpolate linearly.
        let right = lo;
        let left = right - 1; // right >= 1 because lag 0 is always present
        let (l0, l1) = (self.lags[left], self.lags[right]);
        let t = (d - l0) / (l1 - l0);
        self.values[left] * (1.0 - t) + self.values[right] * t
    }
}
