use serde::{Deserialize, Serialize};

use super::series::{SplitSpec, TimeSeries};
use crate::error::{Error, Result};

/// Min-max scaling constants fitted on the training split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    /// Fits on observed values of the training portion only.
    pub fn fit(series: &TimeSeries, split: &SplitSpec) -> Result<Self> {
        let train = split.train_range(series.len())?;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in train {
            if let Some(v) = series.get(i) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if !(hi > lo) {
            return Err(Error::Data(
                "training split needs at least two distinct observed values".into(),
            ));
        }
        Ok(Self { min: lo, max: hi })
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn inverse(&self, y: f64) -> f64 {
        y * (self.max - self.min) + self.min
    }

    pub fn apply_series(&self, series: &TimeSeries) -> TimeSeries {
        series.map_observed(|v| self.apply(v))
    }
}

/// Fits constants on the training split and rescales every observed value.
/// Values outside the training range map outside `[0, 1]`.
pub fn minmax_fit_apply(series: &TimeSeries, split: &SplitSpec) -> Result<(TimeSeries, MinMax)> {
    let scaler = MinMax::fit(series, split)?;
    Ok((scaler.apply_series(series), scaler))
}
