use serde::{Deserialize, Serialize};

use super::fit::fit_normalized;
use super::{derive_seed, TrainConfig};
use crate::error::{Error, Result};
use crate::pipeline::{MinMax, SplitSpec, TimeSeries};

const STREAM_GRID: u64 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub layers: Vec<usize>,
    pub hidden: Vec<usize>,
    pub lag_minutes: Vec<u32>,
    pub learning_rate: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            layers: vec![8, 16, 32, 64],
            hidden: vec![16, 32, 64, 128],
            lag_minutes: vec![5, 10, 15, 20],
            learning_rate: vec![1e-4, 1e-3, 1e-2, 1e-1],
        }
    }
}

impl GridSpec {
    /// Grid points in tie-break order: smaller N_L, then H_L, then lag, then lr.
    pub fn points(&self) -> Result<Vec<GridPoint>> {
        if self.layers.is_empty()
            || self.hidden.is_empty()
            || self.lag_minutes.is_empty()
            || self.learning_rate.is_empty()
        {
            return Err(Error::Config("every grid axis needs at least one value".into()));
        }
        let sorted = |v: &[f64]| {
            let mut v = v.to_vec();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let sorted_int = |v: &[usize]| {
            let mut v = v.to_vec();
            v.sort_unstable();
            v.dedup();
            v
        };
        let mut lags = self.lag_minutes.clone();
        lags.sort_unstable();
        lags.dedup();
        let mut out = Vec::new();
        for &layers in &sorted_int(&self.layers) {
            for &hidden in &sorted_int(&self.hidden) {
                for &lag_minutes in &lags {
                    for &learning_rate in &sorted(&self.learning_rate) {
                        out.push(GridPoint {
                            layers,
                            hidden,
                            lag_minutes,
                            learning_rate,
                        });
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub layers: usize,
    pub hidden: usize,
    pub lag_minutes: u32,
    pub learning_rate: f64,
}

impl GridPoint {
    pub fn apply(&self, base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            layers: self.layers,
            hidden: self.hidden,
            lag_minutes: self.lag_minutes,
            learning_rate: self.learning_rate,
            ..base.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub point: GridPoint,
    /// Validation loss of the kept parameters, or the failure message.
    pub val_loss: std::result::Result<f64, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridOutcome {
    pub best: TrainConfig,
    pub results: Vec<GridResult>,
}

/// Grid search with a caller-supplied evaluator mapping a config to its
/// validation loss.
pub fn grid_search_with<F>(grid: &GridSpec, base: &TrainConfig, mut eval: F) -> Result<GridOutcome>
where
    F: FnMut(&TrainConfig) -> Result<f64>,
{
    let mut results = Vec::new();
    let mut best: Option<(f64, TrainConfig)> = None;
    for (k, point) in grid.points()?.into_iter().enumerate() {
        let mut cfg = point.apply(base);
        cfg.seed = derive_seed(derive_seed(base.seed, STREAM_GRID), k as u64);
        let val_loss = match eval(&cfg) {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(v) => Err(format!("non-finite validation loss {v}")),
            Err(e) => Err(e.to_string()),
        };
        if let Ok(v) = val_loss {
            // strict comparison keeps the earlier (smaller) point on ties
            if best.as_ref().map_or(true, |(b, _)| v < *b) {
                best = Some((v, cfg));
            }
        }
        results.push(GridResult { point, val_loss });
    }
    match best {
        Some((_, best)) => Ok(GridOutcome { best, results }),
        None => Err(Error::Data(format!(
            "all {} grid points failed; first error: {}",
            results.len(),
            results
                .first()
                .and_then(|r| r.val_loss.as_ref().err().cloned())
                .unwrap_or_default()
        ))),
    }
}

/// Trains one model per grid point and keeps the lowest validation loss.
pub fn grid_search(
    series: &TimeSeries,
    grid: &GridSpec,
    split: &SplitSpec,
    base: &TrainConfig,
) -> Result<GridOutcome> {
    let scaler = MinMax::fit(series, split)?;
    let normalized = scaler.apply_series(series);
    grid_search_with(grid, base, |cfg| {
        fit_normalized(&normalized, cfg, split).map(|(_, r)| r.best_val_loss)
    })
}
