use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::series::TimeSeries;
use crate::error::{Error, Result};

/// Drops each currently observed entry independently with probability
/// `rate`. Already-missing entries stay missing.
pub fn apply_mcar(series: &TimeSeries, rate: f64, seed: u64) -> Result<TimeSeries> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Config(format!("missing rate must lie in [0, 1], got {rate}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask: Vec<bool> = series
        .mask()
        .iter()
        .map(|&observed| observed && rng.gen::<f64>() >= rate)
        .collect();
    series.with_mask(mask)
}
