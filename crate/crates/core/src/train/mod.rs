//! End-to-end training: iterative median imputation inside each sequence
//! instance, masked pinball loss, early stopping and grid search.

mod fit;
mod grid;
mod loss;
mod rollout;

pub use fit::{fit, fit_normalized, run_schedule, train_epoch, EarlyStopping, FitOutput};
pub use grid::{grid_search, grid_search_with, GridOutcome, GridPoint, GridResult, GridSpec};
pub use loss::{masked_step_loss, pinball, pinball_fan, pinball_grad, pinball_single};
pub use rollout::{
    mean_sequence_loss, rollout_sequence, sequence_loss_and_grad, InputSource, Rollout,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::validate_levels;
use crate::numkernel::UpdateRule;
use crate::pipeline::lag_steps;

/// The nineteen nominal proportions 0.05, 0.10, …, 0.95.
pub fn default_levels() -> Vec<f64> {
    (1..=19).map(|i| f64::from(i) * 0.05).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub quantiles: Vec<f64>,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Windows per sequence instance (T).
    pub seq_len: usize,
    /// Lag interval in minutes, converted to steps with the series resolution.
    pub lag_minutes: u32,
    pub layers: usize,
    pub hidden: usize,
    pub seed: u64,
    pub patience: usize,
    pub max_epochs: usize,
    /// Backpropagate through imputed medians into earlier steps.
    pub grad_through_imputation: bool,
    pub optimizer: UpdateRule,
    /// Instance stride on the training split; defaults to `seq_len`.
    pub train_stride: Option<usize>,
    /// Random subset of training instances visited per epoch.
    pub max_train_instances: Option<usize>,
    /// Evenly spaced subset of validation instances.
    pub max_val_instances: Option<usize>,
}

impl Default for TrainConfig {
    /// Grid-search optimum: 16 layers, 32 hidden units, 15 min lag, lr 1e-3.
    fn default() -> Self {
        Self {
            quantiles: default_levels(),
            learning_rate: 1e-3,
            batch_size: 64,
            seq_len: 32,
            lag_minutes: 15,
            layers: 16,
            hidden: 32,
            seed: 0,
            patience: 20,
            max_epochs: 200,
            grad_through_imputation: true,
            optimizer: UpdateRule::default(),
            train_stride: None,
            max_train_instances: None,
            max_val_instances: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        validate_levels(&self.quantiles)?;
        rollout::median_index(&self.quantiles)?;
        let bad = |m: String| Err(Error::Config(m));
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        if self.batch_size == 0 || self.seq_len == 0 || self.layers == 0 || self.hidden == 0 {
            return bad("batch size, T, layer count and hidden size must be positive".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be finite and non-negative: {}", self.learning_rate));
        }
        if matches!(self.train_stride, Some(0)) {
            return bad("train stride must be positive".into());
        }
        if matches!(self.max_train_instances, Some(0)) || matches!(self.max_val_instances, Some(0)) {
            return bad("instance caps must be positive".into());
        }
        Ok(())
    }

    pub fn lag_steps(&self, resolution: i64) -> Result<usize> {
        lag_steps(self.lag_minutes, resolution)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    EarlyStop,
    MaxEpochs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub stop_epoch: usize,
    pub stop_reason: StopReason,
    /// Epoch whose parameters were kept (lowest validation loss).
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
