//! Verification metrics for quantile forecasts: reliability, sharpness and
//! skill score, plus a driver that rolls a model over a test split.

use std::io::Write;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{level_eq, validate_levels, QuantileFan, QuantileModel};
use crate::pipeline::{fill_linear, TimeSeries};
use crate::train::default_levels;

/// Lower bounds of the central prediction intervals used for sharpness:
/// (0.05, 0.95), (0.10, 0.90), …, (0.45, 0.55).
pub fn interval_lower_levels() -> Vec<f64> {
    (1..=9).map(|i| f64::from(i) * 0.05).collect()
}

fn check_inputs(fans: &[QuantileFan], observations: &[f64]) -> Result<()> {
    if fans.is_empty() {
        return Err(Error::Data("no forecasts to evaluate".into()));
    }
    if fans.len() != observations.len() {
        return Err(Error::Dimension {
            what: "observations",
            expected: fans.len(),
            actual: observations.len(),
        });
    }
    Ok(())
}

fn level_values(fans: &[QuantileFan], alpha: f64) -> Result<Vec<f64>> {
    fans.iter()
        .map(|f| {
            f.get(alpha)
                .ok_or_else(|| Error::Data(format!("fan at origin {} lacks level {alpha}", f.origin)))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelStat {
    pub alpha: f64,
    /// Share of observations at or below the forecast quantile.
    pub observed_frequency: f64,
    /// |alpha − observed_frequency|, as a fraction.
    pub deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalStat {
    pub lower: f64,
    pub upper: f64,
    pub mean_width: f64,
}

/// Per-level calibration over the nineteen levels and the mean deviation
/// in percent. Ties count as "below" (H(0) = 1).
pub fn reliability(fans: &[QuantileFan], observations: &[f64]) -> Result<(Vec<LevelStat>, f64)> {
    check_inputs(fans, observations)?;
    let n = observations.len() as f64;
    let mut stats = Vec::new();
    for alpha in default_levels() {
        let q = level_values(fans, alpha)?;
        let hits = q.iter().zip(observations).filter(|(q, x)| *q >= *x).count();
        let freq = hits as f64 / n;
        stats.push(LevelStat {
            alpha,
            observed_frequency: freq,
            deviation: (alpha - freq).abs(),
        });
    }
    let mean = stats.iter().map(|s| s.deviation).sum::<f64>() / stats.len() as f64;
    Ok((stats, 100.0 * mean))
}

/// Mean prediction-interval widths over the nine central intervals.
pub fn sharpness(fans: &[QuantileFan]) -> Result<(Vec<IntervalStat>, f64)> {
    if fans.is_empty() {
        return Err(Error::Data("no forecasts to evaluate".into()));
    }
    let n = fans.len() as f64;
    let mut stats = Vec::new();
    for lower in interval_lower_levels() {
        let upper = 1.0 - lower;
        let lo = level_values(fans, lower)?;
        let hi = level_values(fans, upper)?;
        let width = hi.iter().zip(&lo).map(|(h, l)| h - l).sum::<f64>() / n;
        stats.push(IntervalStat {
            lower,
            upper,
            mean_width: width,
        });
    }
    let mean = stats.iter().map(|s| s.mean_width).sum::<f64>() / stats.len() as f64;
    Ok((stats, mean))
}

/// Mean over samples of Σ_i [H(q_i − x) − α_i](x − q_i). Never positive.
pub fn skill(fans: &[QuantileFan], observations: &[f64]) -> Result<f64> {
    check_inputs(fans, observations)?;
    let mut total = 0.0;
    for alpha in default_levels() {
        let q = level_values(fans, alpha)?;
        for (q, x) in q.iter().zip(observations) {
            let h = if q >= x { 1.0 } else { 0.0 };
            total += (h - alpha) * (x - q);
        }
    }
    Ok(total / observations.len() as f64)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalMetadata {
    pub missing_rate: Option<f64>,
    pub seed: Option<u64>,
    pub model_id: Option<String>,
    pub quantiles: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Number of evaluated forecasts (origins with an observed target).
    pub n: usize,
    /// Mean reliability deviation, percent.
    pub reliability: f64,
    /// Mean interval width, normalized units.
    pub sharpness: f64,
    pub skill: f64,
    pub levels: Vec<LevelStat>,
    pub intervals: Vec<IntervalStat>,
    pub metadata: EvalMetadata,
}

impl EvaluationReport {
    pub fn from_fans(fans: &[QuantileFan], observations: &[f64], metadata: EvalMetadata) -> Result<Self> {
        let (levels, r) = reliability(fans, observations)?;
        let (intervals, s) = sharpness(fans)?;
        let sk = skill(fans, observations)?;
        Ok(Self {
            n: observations.len(),
            reliability: r,
            sharpness: s,
            skill: sk,
            levels,
            intervals,
            metadata,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// One row per level: alpha, observed frequency, deviation, and the mean
    /// width of the interval whose lower bound is that level (blank above 0.45).
    pub fn write_levels_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["alpha", "observed_frequency", "deviation", "interval_width"])
            .map_err(csv_err)?;
        for l in &self.levels {
            let width = self
                .intervals
                .iter()
                .find(|i| level_eq(i.lower, l.alpha))
                .map(|i| i.mean_width.to_string())
                .unwrap_or_default();
            out.write_record([
                format!("{:.2}", l.alpha),
                l.observed_frequency.to_string(),
                l.deviation.to_string(),
                width,
            ])
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(format!("csv write failed: {e}"))
}

/// Result of rolling a model over a test split.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub report: EvaluationReport,
    /// One fan per target index `lag..len`; `fans[k].origin + 1` is the target.
    pub fans: Vec<QuantileFan>,
    /// Target at each fan, `None` where it was missing.
    pub targets: Vec<Option<f64>>,
}

/// One-step-ahead forecasts across `series`. Missing inputs are replaced by
/// the model's own median forecast as the roll proceeds; the first window is
/// bootstrapped by linear fill. Metrics use origins with an observed target.
pub fn evaluate_model<M: QuantileModel + ?Sized>(
    model: &M,
    series: &TimeSeries,
    levels: &[f64],
    metadata: EvalMetadata,
) -> Result<Evaluation> {
    validate_levels(levels)?;
    let mid = levels
        .iter()
        .position(|a| level_eq(*a, 0.5))
        .ok_or_else(|| Error::Config("quantile set must contain 0.5".into()))?;
    let lag = model.lag();
    let n = series.len();
    if n <= lag {
        return Err(Error::Data(format!("test split has {n} points, need more than the lag {lag}")));
    }
    let mask = series.mask();
    let raw = series.raw_values();
    let boot = fill_linear(&raw[..lag], &mask[..lag]).or_else(|_| {
        fill_linear(raw, mask).map(|v| v[..lag].to_vec())
    })?;

    let mut filled = boot;
    filled.reserve(n - lag);
    let alphas = ArrayView1::from(levels);
    let mut windows = Array2::<f64>::zeros((levels.len(), lag));
    let mut fans = Vec::with_capacity(n - lag);
    let mut targets = Vec::with_capacity(n - lag);
    for t in lag..n {
        let window = ArrayView1::from(&filled[t - lag..t]);
        for mut row in windows.rows_mut() {
            row.assign(&window);
        }
        let y = model.predict(windows.view(), alphas)?;
        let median = y[mid];
        let target = series.get(t);
        let mut fan = QuantileFan::new(t - 1, levels.to_vec(), y.to_vec())?;
        fan.monotonize();
        fans.push(fan);
        targets.push(target);
        filled.push(target.unwrap_or(median));
    }

    let (scored, obs): (Vec<QuantileFan>, Vec<f64>) = fans
        .iter()
        .zip(&targets)
        .filter_map(|(f, t)| t.map(|x| (f.clone(), x)))
        .unzip();
    if scored.is_empty() {
        return Err(Error::Data("no observed targets in the test split".into()));
    }
    let metadata = EvalMetadata {
        quantiles: levels.to_vec(),
        ..metadata
    };
    let report = EvaluationReport::from_fans(&scored, &obs, metadata)?;
    Ok(Evaluation {
        report,
        fans,
        targets,
    })
}
