use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::rollout::{mean_sequence_loss, rollout_chunk, GradRequest};
use super::{derive_seed, EpochRecord, StopReason, TrainConfig, TrainReport};
use crate::error::{Error, Result};
use crate::model::{Architecture, ForecasterParams};
use crate::numkernel::{optimizer_step, OptimizerState};
use crate::pipeline::{make_instances, MinMax, SequenceInstance, SplitSpec, TimeSeries};

/// Instances rolled out together in one batched pass. Bounds the memory held
/// by forward traces.
const CHUNK: usize = 8;

const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;

/// Counts consecutive epochs with training loss strictly below validation
/// loss and fires when the count reaches `patience`.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    streak: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, streak: 0 }
    }

    /// Records one epoch; returns `true` when training should stop.
    pub fn observe(&mut self, train_loss: f64, val_loss: f64) -> bool {
        if train_loss < val_loss {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        self.streak >= self.patience
    }

    pub fn streak(&self) -> usize {
        self.streak
    }
}

/// Runs epochs `1..=max_epochs` through `epoch_fn`, which returns
/// `(train loss, validation loss)`, until the early-stop rule fires.
pub fn run_schedule<F>(max_epochs: usize, patience: usize, mut epoch_fn: F) -> Result<TrainReport>
where
    F: FnMut(usize) -> Result<(f64, f64)>,
{
    if max_epochs == 0 {
        return Err(Error::Config("max epochs must be at least 1".into()));
    }
    let mut stopper = EarlyStopping::new(patience);
    let mut epochs = Vec::new();
    let mut reason = StopReason::MaxEpochs;
    for epoch in 1..=max_epochs {
        let (train_loss, val_loss) = epoch_fn(epoch)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Data(format!(
                "non-finite loss at epoch {epoch}: train {train_loss}, validation {val_loss}"
            )));
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if stopper.observe(train_loss, val_loss) {
            reason = StopReason::EarlyStop;
            break;
        }
    }
    let best = epochs
        .iter()
        .fold(None::<&EpochRecord>, |best, e| match best {
            Some(b) if b.val_loss <= e.val_loss => Some(b),
            _ => Some(e),
        })
        .expect("at least one epoch");
    Ok(TrainReport {
        stop_epoch: epochs.last().map_or(0, |e| e.epoch),
        stop_reason: reason,
        best_epoch: best.epoch,
        best_val_loss: best.val_loss,
        epochs,
    })
}

/// One pass over (a seeded shuffle of) the training instances. Returns the
/// mean `L_rec` seen during the pass.
pub fn train_epoch(
    params: &mut ForecasterParams,
    instances: &[SequenceInstance],
    cfg: &TrainConfig,
    opt: &mut OptimizerState,
    epoch: usize,
) -> Result<f64> {
    if instances.is_empty() {
        return Err(Error::Data("no training instances".into()));
    }
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
        derive_seed(cfg.seed, STREAM_SHUFFLE),
        epoch as u64,
    ));
    order.shuffle(&mut rng);
    if let Some(cap) = cfg.max_train_instances {
        order.truncate(cap);
    }

    let mut total = 0.0;
    let mut flat = params.to_flat();
    for (batch_id, batch) in order.chunks(cfg.batch_size).enumerate() {
        let mut grads = params.zeros_like();
        let scale = 1.0 / batch.len() as f64;
        for group in batch.chunks(CHUNK) {
            let refs: Vec<&SequenceInstance> = group.iter().map(|&i| &instances[i]).collect();
            let (losses, _) = rollout_chunk(
                params,
                &refs,
                &cfg.quantiles,
                Some(GradRequest {
                    grads: &mut grads,
                    scale,
                    through_imputation: cfg.grad_through_imputation,
                }),
                false,
                batch_id,
            )?;
            total += losses.iter().sum::<f64>();
        }
        optimizer_step(&mut flat, &grads.to_flat(), opt, cfg.optimizer, cfg.learning_rate)?;
        params.set_flat(&flat)?;
    }
    Ok(total / order.len() as f64)
}

fn evenly_spaced<T: Clone>(items: Vec<T>, cap: Option<usize>) -> Vec<T> {
    match cap {
        Some(m) if m < items.len() => {
            let n = items.len();
            (0..m).map(|i| items[i * n / m].clone()).collect()
        }
        _ => items,
    }
}

#[derive(Clone, Debug)]
pub struct FitOutput {
    pub params: ForecasterParams,
    pub report: TrainReport,
    pub scaler: MinMax,
}

/// Fits min-max constants on the training split, rescales, and trains.
pub fn fit(series: &TimeSeries, cfg: &TrainConfig, split: &SplitSpec) -> Result<FitOutput> {
    let scaler = MinMax::fit(series, split)?;
    let normalized = scaler.apply_series(series);
    let (params, report) = fit_normalized(&normalized, cfg, split)?;
    Ok(FitOutput {
        params,
        report,
        scaler,
    })
}

/// Trains on an already normalized series. Returns the parameters of the
/// epoch with the lowest validation loss.
pub fn fit_normalized(
    series: &TimeSeries,
    cfg: &TrainConfig,
    split: &SplitSpec,
) -> Result<(ForecasterParams, TrainReport)> {
    cfg.validate()?;
    let lag = cfg.lag_steps(series.resolution)?;
    let [train, val, _] = split.apply(series)?;
    let stride = cfg.train_stride.unwrap_or(cfg.seq_len);
    let train_insts = make_instances(&train, lag, cfg.seq_len, stride)?;
    let val_insts = evenly_spaced(
        make_instances(&val, lag, cfg.seq_len, cfg.seq_len)?,
        cfg.max_val_instances,
    );

    let arch = Architecture {
        layers: cfg.layers,
        hidden: cfg.hidden,
        lag,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_INIT));
    let mut params = ForecasterParams::init(arch, &mut rng)?;
    let mut opt = OptimizerState::new(params.param_count());
    let mut best: Option<(f64, ForecasterParams)> = None;

    let report = run_schedule(cfg.max_epochs, cfg.patience, |epoch| {
        let train_loss = train_epoch(&mut params, &train_insts, cfg, &mut opt, epoch)?;
        let val_loss = mean_sequence_loss(&params, &val_insts, &cfg.quantiles, CHUNK)?;
        if best.as_ref().map_or(true, |(b, _)| val_loss < *b) {
            best = Some((val_loss, params.clone()));
        }
        Ok((train_loss, val_loss))
    })?;
    let (_, best_params) = best.expect("at least one epoch ran");
    Ok((best_params, report))
}
