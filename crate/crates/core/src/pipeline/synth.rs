//! Synthetic generation series: daily seasonal shape plus an AR(1)
//! disturbance with bounded Gaussian innovations, clipped to capacity.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::series::{TimeSeries, DEFAULT_RESOLUTION_SECS};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub length: usize,
    pub seed: u64,
    /// Upper clip, in output units (MW).
    pub capacity: f64,
    pub start: i64,
    pub resolution: i64,
    /// Mean output as a fraction of capacity.
    pub mean_level: f64,
    /// Seasonal amplitude as a fraction of capacity.
    pub seasonal_amplitude: f64,
    /// Seasonal period in steps (288 = one day at 5 min).
    pub seasonal_period: usize,
    pub ar_coefficient: f64,
    /// Innovation standard deviation as a fraction of capacity.
    pub noise_scale: f64,
    /// Innovations are clipped to ± this many standard deviations.
    pub noise_bound: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            length: 50_000,
            seed: 0,
            capacity: 52.5,
            start: 1_514_764_800,
            resolution: DEFAULT_RESOLUTION_SECS,
            mean_level: 0.4,
            seasonal_amplitude: 0.15,
            seasonal_period: 288,
            ar_coefficient: 0.95,
            noise_scale: 0.06,
            noise_bound: 3.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic spec: {m}")));
        if !(self.capacity > 0.0 && self.capacity.is_finite()) {
            return bad("capacity must be positive");
        }
        if self.resolution <= 0 {
            return bad("resolution must be positive");
        }
        if self.seasonal_period == 0 {
            return bad("seasonal period must be positive");
        }
        if !(self.ar_coefficient.abs() < 1.0) {
            return bad("AR coefficient must lie in (-1, 1)");
        }
        if !(self.noise_scale >= 0.0 && self.noise_bound > 0.0) {
            return bad("noise scale must be non-negative and bound positive");
        }
        Ok(())
    }
}

pub fn generate(spec: &SynthSpec) -> Result<TimeSeries> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut ar = 0.0;
    let values: Vec<f64> = (0..spec.length)
        .map(|t| {
            let e: f64 = normal.sample(&mut rng);
            let e = e.clamp(-spec.noise_bound, spec.noise_bound);
            ar = spec.ar_coefficient * ar + spec.noise_scale * e;
            let phase = 2.0 * std::f64::consts::PI * t as f64 / spec.seasonal_period as f64;
            let level = spec.mean_level + spec.seasonal_amplitude * phase.sin() + ar;
            (level * spec.capacity).clamp(0.0, spec.capacity)
        })
        .collect();
    let mask = vec![true; values.len()];
    TimeSeries::new(spec.start, spec.resolution, values, mask)
}
