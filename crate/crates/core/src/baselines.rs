//! Two-phase benchmarks: complete the series with a classical imputer, then
//! train the same quantile network on the completed data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ForecasterParams;
use crate::pipeline::{fill_linear, MinMax, SplitSpec, TimeSeries};
use crate::train::{fit_normalized, FitOutput, TrainConfig, TrainReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImputerKind {
    Linear,
    Knn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImputerSpec {
    pub kind: ImputerKind,
    /// Neighbour count (KNN only).
    pub k: usize,
    /// Pattern window length in steps (KNN only); `None` uses the model lag.
    pub window: Option<usize>,
}

impl ImputerSpec {
    pub fn linear() -> Self {
        Self {
            kind: ImputerKind::Linear,
            k: 5,
            window: None,
        }
    }

    pub fn knn(k: usize, window: Option<usize>) -> Self {
        Self {
            kind: ImputerKind::Knn,
            k,
            window,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.window == Some(0) {
            return Err(Error::Config("KNN needs k >= 1 and window >= 1".into()));
        }
        Ok(())
    }
}

/// A completed series. `series` is fully observed; `provenance` is the
/// original mask.
#[derive(Clone, Debug)]
pub struct Imputed {
    pub series: TimeSeries,
    pub provenance: Vec<bool>,
    /// KNN had too few complete windows and fell back to linear fill.
    pub fallback: bool,
}

fn completed(series: &TimeSeries, values: Vec<f64>, fallback: bool) -> Result<Imputed> {
    let n = values.len();
    Ok(Imputed {
        series: TimeSeries::new(series.start, series.resolution, values, vec![true; n])?,
        provenance: series.mask().to_vec(),
        fallback,
    })
}

/// Straight lines across interior gaps, nearest-value hold at the ends.
pub fn impute_linear(series: &TimeSeries) -> Result<Imputed> {
    let values = fill_linear(series.raw_values(), series.mask())?;
    completed(series, values, false)
}

/// Pattern-matching imputation. Each missing point takes the mean, at the
/// same offset, of the `k` fully observed length-`w` windows closest to the
/// window around it (Euclidean distance over that window's observed
/// positions, earliest window first on ties).
pub fn impute_knn(series: &TimeSeries, k: usize, w: usize) -> Result<Imputed> {
    if k == 0 || w == 0 {
        return Err(Error::Config("KNN needs k >= 1 and window >= 1".into()));
    }
    let linear = fill_linear(series.raw_values(), series.mask())?;
    let n = series.len();
    let x = series.raw_values();
    let mask = series.mask();
    if w > n {
        return completed(series, linear, true);
    }

    let mut run = 0;
    let mut candidates = Vec::new();
    for (i, &m) in mask.iter().enumerate() {
        run = if m { run + 1 } else { 0 };
        if run >= w {
            candidates.push(i + 1 - w);
        }
    }
    if candidates.len() < k {
        return completed(series, linear, true);
    }

    let mut out = x.to_vec();
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(candidates.len());
    let mut cached: Option<(usize, Vec<usize>)> = None;
    for p in (0..n).filter(|&p| !mask[p]) {
        let s = p.saturating_sub(w / 2).min(n - w);
        let offsets: Vec<usize> = (0..w).filter(|&j| mask[s + j]).collect();
        if offsets.is_empty() {
            // nothing to match on
            out[p] = linear[p];
            continue;
        }
        if cached.as_ref().map_or(true, |(cs, _)| *cs != s) {
            scored.clear();
            scored.extend(candidates.iter().map(|&c| {
                let d: f64 = offsets.iter().map(|&j| (x[c + j] - x[s + j]).powi(2)).sum();
                (d, c)
            }));
            scored.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut nearest: Vec<(f64, usize)> = scored[..k].to_vec();
            nearest.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cached = Some((s, nearest.into_iter().map(|(_, c)| c).collect()));
        }
        let (_, nearest) = cached.as_ref().expect("filled above");
        out[p] = nearest.iter().map(|&c| x[c + p - s]).sum::<f64>() / k as f64;
    }
    completed(series, out, false)
}

pub fn impute(series: &TimeSeries, spec: &ImputerSpec, default_window: usize) -> Result<Imputed> {
    spec.validate()?;
    match spec.kind {
        ImputerKind::Linear => impute_linear(series),
        ImputerKind::Knn => impute_knn(series, spec.k, spec.window.unwrap_or(default_window)),
    }
}

/// Output of a two-phase run: the trained model plus imputation details.
#[derive(Clone, Debug)]
pub struct TwoPhaseOutput {
    pub fit: FitOutput,
    pub fallback: bool,
}

/// Normalizes with constants from the observed training values, imputes the
/// whole series, and trains on the completed series.
pub fn run_two_phase(
    series: &TimeSeries,
    imputer: &ImputerSpec,
    cfg: &TrainConfig,
    split: &SplitSpec,
) -> Result<TwoPhaseOutput> {
    cfg.validate()?;
    let scaler = MinMax::fit(series, split)?;
    let normalized = scaler.apply_series(series);
    let lag = cfg.lag_steps(series.resolution)?;
    let imputed = impute(&normalized, imputer, lag)?;
    let (params, report): (ForecasterParams, TrainReport) =
        fit_normalized(&imputed.series, cfg, split)?;
    Ok(TwoPhaseOutput {
        fit: FitOutput {
            params,
            report,
            scaler,
        },
        fallback: imputed.fallback,
    })
}
