use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stored in place of a missing observation. Never read as data.
pub const MISSING: f64 = f64::NAN;

/// Default sampling interval: five minutes.
pub const DEFAULT_RESOLUTION_SECS: i64 = 300;

/// Regularly sampled scalar series with a presence mask (`true` = observed).
///
/// Equality ignores whatever is stored at missing positions.
#[derive(Clone, Debug)]
pub struct TimeSeries {
    /// Timestamp of the first sample, seconds since the Unix epoch.
    pub start: i64,
    /// Sampling interval in seconds.
    pub resolution: i64,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl TimeSeries {
    /// Builds a series. Values at masked-out positions are replaced by
    /// [`MISSING`] whatever they were.
    pub fn new(start: i64, resolution: i64, mut values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if values.len() != mask.len() {
            return Err(Error::Data(format!(
                "{} values but {} mask bits",
                values.len(),
                mask.len()
            )));
        }
        if resolution <= 0 {
            return Err(Error::Data(format!("resolution must be positive, got {resolution}")));
        }
        for (v, m) in values.iter_mut().zip(&mask) {
            if !*m {
                *v = MISSING;
            } else if !v.is_finite() {
                return Err(Error::Data("observed value is not finite".into()));
            }
        }
        Ok(Self {
            start,
            resolution,
            values,
            mask,
        })
    }

    /// Fully observed series starting at epoch 0 with the default resolution.
    pub fn from_observed(values: Vec<f64>) -> Result<Self> {
        let mask = vec![true; values.len()];
        Self::new(0, DEFAULT_RESOLUTION_SECS, values, mask)
    }

    /// Series from optional values (`None` = missing).
    pub fn from_options(values: &[Option<f64>]) -> Result<Self> {
        let mask = values.iter().map(Option::is_some).collect();
        let vals = values.iter().map(|v| v.unwrap_or(MISSING)).collect();
        Self::new(0, DEFAULT_RESOLUTION_SECS, vals, mask)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Raw storage, sentinels included.
    pub fn raw_values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        self.mask[i].then(|| self.values[i])
    }

    pub fn is_observed(&self, i: usize) -> bool {
        self.mask[i]
    }

    pub fn observed(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .zip(&self.mask)
            .enumerate()
            .filter(|(_, (_, m))| **m)
            .map(|(i, (v, _))| (i, *v))
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn missing_count(&self) -> usize {
        self.len() - self.observed_count()
    }

    pub fn timestamp(&self, i: usize) -> i64 {
        self.start + self.resolution * i as i64
    }

    pub fn slice(&self, range: Range<usize>) -> TimeSeries {
        TimeSeries {
            start: self.timestamp(range.start),
            resolution: self.resolution,
            values: self.values[range.clone()].to_vec(),
            mask: self.mask[range].to_vec(),
        }
    }

    /// Same values under a different mask. Newly unmasked positions must
    /// hold finite values.
    pub(crate) fn with_mask(&self, mask: Vec<bool>) -> Result<TimeSeries> {
        TimeSeries::new(self.start, self.resolution, self.values.clone(), mask)
    }

    pub fn map_observed(&self, f: impl Fn(f64) -> f64) -> TimeSeries {
        let values = self
            .values
            .iter()
            .zip(&self.mask)
            .map(|(v, m)| if *m { f(*v) } else { MISSING })
            .collect();
        TimeSeries {
            start: self.start,
            resolution: self.resolution,
            values,
            mask: self.mask.clone(),
        }
    }
}

impl PartialEq for TimeSeries {
    fn eq(&self, other: &Self) -> bool {
        self.start == other.start
            && self.resolution == other.resolution
            && self.mask == other.mask
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.mask)
                .all(|((a, b), m)| !*m || a.to_bits() == b.to_bits())
    }
}

/// Chronological train / validation / test fractions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.6,
            validation: 0.2,
            test: 0.2,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(Error::Config(format!("split fractions must be positive: {self:?}")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions must sum to 1: {self:?}")));
        }
        Ok(())
    }

    /// Contiguous index ranges for a series of length `n`.
    pub fn ranges(&self, n: usize) -> Result<[Range<usize>; 3]> {
        self.validate()?;
        let n_train = (n as f64 * self.train).floor() as usize;
        let n_val = (n as f64 * self.validation).floor() as usize;
        let a = n_train.min(n);
        let b = (a + n_val).min(n);
        Ok([0..a, a..b, b..n])
    }

    pub fn train_range(&self, n: usize) -> Result<Range<usize>> {
        Ok(self.ranges(n)?[0].clone())
    }

    pub fn apply(&self, series: &TimeSeries) -> Result<[TimeSeries; 3]> {
        let [a, b, c] = self.ranges(series.len())?;
        Ok([series.slice(a), series.slice(b), series.slice(c)])
    }
}
