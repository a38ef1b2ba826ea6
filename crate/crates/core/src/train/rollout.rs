//! Iterative imputation over a sequence instance.
//!
//! At step `j` the window `X_j` is forecast at every level. The next value is
//! the observation when present and the forecasted median otherwise, and the
//! window shifts by one. The step loss is the pinball loss over observed
//! targets only; `L_rec` averages it over the `T` steps.
//!
//! The backward pass walks the steps in reverse. Window gradients are
//! accumulated per position; when a position was imputed, its gradient is fed
//! back into the median output of the step that produced it.

use ndarray::{Array1, Array2};

use super::loss::{pinball, pinball_grad};
use crate::error::{Error, Result};
use crate::model::{backward_batch, forward_batch, level_eq, ForecasterParams, ForwardTrace};
use crate::pipeline::SequenceInstance;

/// Where a step's next input value came from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InputSource {
    Observed,
    Imputed,
}

/// Audit record of one instance rollout.
#[derive(Clone, Debug)]
pub struct Rollout {
    /// Raw (unsorted) forecasts per step, aligned with the levels.
    pub fans: Vec<Vec<f64>>,
    /// Window actually fed to the model at each step.
    pub windows: Vec<Vec<f64>>,
    /// Value placed at each target position, observed or imputed.
    pub next_values: Vec<f64>,
    pub sources: Vec<InputSource>,
    pub step_losses: Vec<f64>,
    /// `(1/T) Σ_j masked step loss`.
    pub loss: f64,
}

impl Rollout {
    pub fn imputed(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.sources
            .iter()
            .zip(&self.next_values)
            .enumerate()
            .filter(|(_, (s, _))| **s == InputSource::Imputed)
            .map(|(j, (_, v))| (j, *v))
    }
}

pub(crate) fn median_index(levels: &[f64]) -> Result<usize> {
    levels
        .iter()
        .position(|a| level_eq(*a, 0.5))
        .ok_or_else(|| Error::Config("quantile set must contain 0.5 for median imputation".into()))
}

/// Gradient request for [`rollout_chunk`].
pub(crate) struct GradRequest<'a> {
    pub grads: &'a mut ForecasterParams,
    /// Multiplies every instance's `L_rec` (e.g. `1 / batch size`).
    pub scale: f64,
    pub through_imputation: bool,
}

/// Rolls a group of instances forward in lockstep. Returns each instance's
/// `L_rec` and, if `record`, the full audit trail.
pub(crate) fn rollout_chunk(
    params: &ForecasterParams,
    instances: &[&SequenceInstance],
    levels: &[f64],
    mut grad: Option<GradRequest<'_>>,
    record: bool,
    batch_id: usize,
) -> Result<(Vec<f64>, Vec<Rollout>)> {
    let n = instances.len();
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let lag = params.arch.lag;
    let steps = instances[0].steps;
    for inst in instances {
        if inst.lag != lag {
            return Err(Error::contract(format!(
                "instance lag {} does not match model lag {lag}",
                inst.lag
            )));
        }
        if inst.steps != steps {
            return Err(Error::contract("instances in one chunk must share T"));
        }
    }
    let mid = median_index(levels)?;
    let q = levels.len();
    let rows = n * q;
    let t_inv = 1.0 / steps as f64;

    let alphas = Array1::from_iter((0..rows).map(|r| levels[r % q]));
    let mut filled: Vec<Vec<f64>> = instances
        .iter()
        .map(|inst| {
            let mut v = vec![0.0; lag + steps];
            v[..lag].copy_from_slice(&inst.first_window);
            v
        })
        .collect();
    let mut losses = vec![0.0; n];
    let mut traces: Vec<ForwardTrace> = Vec::new();
    let mut logs: Vec<Rollout> = if record {
        (0..n)
            .map(|_| Rollout {
                fans: Vec::with_capacity(steps),
                windows: Vec::with_capacity(steps),
                next_values: Vec::with_capacity(steps),
                sources: Vec::with_capacity(steps),
                step_losses: Vec::with_capacity(steps),
                loss: 0.0,
            })
            .collect()
    } else {
        Vec::new()
    };

    for j in 0..steps {
        let mut windows = Array2::<f64>::zeros((rows, lag));
        for (i, f) in filled.iter().enumerate() {
            for a in 0..q {
                windows
                    .row_mut(i * q + a)
                    .iter_mut()
                    .zip(&f[j..j + lag])
                    .for_each(|(dst, src)| *dst = *src);
            }
        }
        let trace = forward_batch(params, windows.view(), alphas.view())?;
        let y = &trace.y;
        let p = lag + j;
        for (i, inst) in instances.iter().enumerate() {
            let fan = y.as_slice().expect("contiguous")[i * q..(i + 1) * q].to_vec();
            let observed = inst.mask[p];
            let (next, source) = if observed {
                (inst.values[p], InputSource::Observed)
            } else {
                (fan[mid], InputSource::Imputed)
            };
            let step_loss = if observed {
                pinball(inst.values[p], &fan, levels)
            } else {
                0.0
            };
            if !step_loss.is_finite() || !next.is_finite() {
                return Err(Error::NonFiniteLoss { batch: batch_id, step: j });
            }
            losses[i] += step_loss * t_inv;
            if record {
                let log = &mut logs[i];
                log.windows.push(filled[i][j..j + lag].to_vec());
                log.fans.push(fan);
                log.next_values.push(next);
                log.sources.push(source);
                log.step_losses.push(step_loss);
            }
            filled[i][p] = next;
        }
        if grad.is_some() {
            traces.push(trace);
        }
    }
    if record {
        for (log, l) in logs.iter_mut().zip(&losses) {
            log.loss = *l;
        }
    }

    if let Some(req) = grad.as_mut() {
        let mut d_filled: Vec<Vec<f64>> = vec![vec![0.0; lag + steps]; n];
        for j in (0..steps).rev() {
            let trace = &traces[j];
            let y = trace.y.as_slice().expect("contiguous");
            let p = lag + j;
            let mut d_y = Array1::<f64>::zeros(rows);
            for (i, inst) in instances.iter().enumerate() {
                if inst.mask[p] {
                    let x = inst.values[p];
                    for a in 0..q {
                        let r = i * q + a;
                        d_y[r] = req.scale * t_inv * pinball_grad(x, y[r], levels[a]);
                    }
                } else if req.through_imputation {
                    d_y[i * q + mid] += d_filled[i][p];
                }
            }
            let d_windows = backward_batch(params, trace, d_y.view(), req.grads)?;
            for i in 0..n {
                for a in 0..q {
                    let row = d_windows.row(i * q + a);
                    for (k, g) in row.iter().enumerate() {
                        d_filled[i][j + k] += g;
                    }
                }
            }
        }
    }
    Ok((losses, logs))
}

/// Rolls one instance forward with iterative median imputation and returns
/// the full audit trail and `L_rec`.
pub fn rollout_sequence(
    params: &ForecasterParams,
    instance: &SequenceInstance,
    levels: &[f64],
) -> Result<Rollout> {
    let (_, mut logs) = rollout_chunk(params, &[instance], levels, None, true, 0)?;
    Ok(logs.pop().expect("one instance"))
}

/// `L_rec` of one instance and its gradient w.r.t. every parameter.
pub fn sequence_loss_and_grad(
    params: &ForecasterParams,
    instance: &SequenceInstance,
    levels: &[f64],
    through_imputation: bool,
) -> Result<(f64, ForecasterParams)> {
    let mut grads = params.zeros_like();
    let (losses, _) = rollout_chunk(
        params,
        &[instance],
        levels,
        Some(GradRequest {
            grads: &mut grads,
            scale: 1.0,
            through_imputation,
        }),
        false,
        0,
    )?;
    Ok((losses[0], grads))
}

/// Mean `L_rec` over `instances`, processed in chunks, without gradients.
pub fn mean_sequence_loss(
    params: &ForecasterParams,
    instances: &[SequenceInstance],
    levels: &[f64],
    chunk: usize,
) -> Result<f64> {
    if instances.is_empty() {
        return Err(Error::Data("no instances to evaluate".into()));
    }
    let refs: Vec<&SequenceInstance> = instances.iter().collect();
    let mut total = 0.0;
    for (b, group) in refs.chunks(chunk.max(1)).enumerate() {
        let (losses, _) = rollout_chunk(params, group, levels, None, false, b)?;
        total += losses.iter().sum::<f64>();
    }
    Ok(total / instances.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{forward, Architecture};
    use crate::pipeline::{make_instances, TimeSeries};
    use crate::train::default_levels;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(arch: Architecture, seed: u64) -> ForecasterParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ForecasterParams::init(arch, &mut rng).unwrap()
    }

    fn instance(values: &[Option<f64>], lag: usize) -> SequenceInstance {
        let s = TimeSeries::from_options(values).unwrap();
        make_instances(&s, lag, values.len() - lag, 1).unwrap().remove(0)
    }

    #[test]
    fn fully_observed_uses_only_observations() {
        let arch = Architecture { layers: 2, hidden: 3, lag: 2 };
        let p = random_params(arch, 1);
        let vals: Vec<Option<f64>> = (0..8).map(|i| Some(i as f64 * 0.1)).collect();
        let inst = instance(&vals, 2);
        let levels = default_levels();
        let r = rollout_sequence(&p, &inst, &levels).unwrap();
        assert!(r.sources.iter().all(|s| *s == InputSource::Observed));
        let mut mean = 0.0;
        for j in 0..inst.steps {
            assert_eq!(r.windows[j], vec![vals[j].unwrap(), vals[j + 1].unwrap()]);
            let fan: Vec<f64> = levels.iter().map(|a| forward(&p, &r.windows[j], *a).unwrap().0).collect();
            mean += pinball(vals[j + 2].unwrap(), &fan, &levels) / inst.steps as f64;
        }
        assert!((r.loss - mean).abs() < 1e-12);
    }

    #[test]
    fn all_targets_missing_gives_zero_loss_and_median_chain() {
        let arch = Architecture { layers: 1, hidden: 2, lag: 2 };
        let p = random_params(arch, 2);
        let inst = instance(&[Some(0.3), Some(0.6), None, None, None, None], 2);
        let r = rollout_sequence(&p, &inst, &[0.25, 0.5, 0.75]).unwrap();
        assert_eq!(r.loss, 0.0);
        let mut window = vec![0.3, 0.6];
        for j in 0..4 {
            let median = forward(&p, &window, 0.5).unwrap().0;
            assert_eq!(r.next_values[j], median);
            window = vec![window[1], median];
        }
    }

    #[test]
    fn constant_forecaster_by_hand() {
        // Zero network: every quantile equals the head bias b.
        let arch = Architecture { layers: 2, hidden: 2, lag: 2 };
        let mut p = ForecasterParams::zeros(arch);
        let b = 0.4;
        p.head.b[0] = b;
        let levels = [0.1, 0.5, 0.9];
        let inst = instance(&[Some(0.2), Some(0.3), None, Some(1.0), None], 2);
        let r = rollout_sequence(&p, &inst, &levels).unwrap();
        assert_eq!(r.next_values, vec![b, 1.0, b]);
        // only step 1 (target 1.0) counts: Σ α (1.0 − 0.4) = 1.5 × 0.6
        let expected = (0.1 + 0.5 + 0.9) * 0.6 / 3.0;
        assert!((r.loss - expected).abs() < 1e-12);
    }

    #[test]
    fn missing_median_level_rejected() {
        let arch = Architecture { layers: 1, hidden: 2, lag: 2 };
        let p = ForecasterParams::zeros(arch);
        let inst = instance(&[Some(0.2), Some(0.3), Some(0.4)], 2);
        assert!(rollout_sequence(&p, &inst, &[0.1, 0.9]).is_err());
    }

    #[test]
    fn gradient_through_imputation_matches_finite_differences() {
        let levels = [0.1, 0.5, 0.9];
        let arch = Architecture { layers: 2, hidden: 3, lag: 2 };
        let p = random_params(arch, 13);
        let inst = instance(&[Some(0.2), Some(0.5), None, Some(0.4), None, None, Some(0.7)], 2);
        let (_, g) = sequence_loss_and_grad(&p, &inst, &levels, true).unwrap();
        let flat = p.to_flat();
        let g = g.to_flat();
        let eps = 1e-5;
        let mut q = p.clone();
        for k in 0..flat.len() {
            let mut f = flat.clone();
            f[k] += eps;
            q.set_flat(&f).unwrap();
            let up = rollout_sequence(&q, &inst, &levels).unwrap().loss;
            f[k] -= 2.0 * eps;
            q.set_flat(&f).unwrap();
            let down = rollout_sequence(&q, &inst, &levels).unwrap().loss;
            let num = (up - down) / (2.0 * eps);
            let err = (num - g[k]).abs() / num.abs().max(g[k].abs()).max(1e-7);
            assert!(err < 1e-4, "param {k}: analytic {} numeric {num}", g[k]);
        }
    }

    #[test]
    fn detached_gradient_differs_when_imputing() {
        let levels = [0.1, 0.5, 0.9];
        let arch = Architecture { layers: 1, hidden: 3, lag: 2 };
        let p = random_params(arch, 4);
        let inst = instance(&[Some(0.2), Some(0.5), None, Some(0.4), Some(0.6)], 2);
        let (la, ga) = sequence_loss_and_grad(&p, &inst, &levels, true).unwrap();
        let (lb, gb) = sequence_loss_and_grad(&p, &inst, &levels, false).unwrap();
        assert_eq!(la, lb);
        assert_ne!(ga.to_flat(), gb.to_flat());
    }

    #[test]
    fn chunked_matches_single() {
        let levels = default_levels();
        let arch = Architecture { layers: 2, hidden: 4, lag: 3 };
        let p = random_params(arch, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vals: Vec<Option<f64>> = (0..60)
            .map(|_| (rng.gen::<f64>() > 0.25).then(|| rng.gen()))
            .collect();
        let s = TimeSeries::from_options(&vals).unwrap();
        let insts = make_instances(&s, 3, 5, 5).unwrap();
        let single: f64 = insts
            .iter()
            .map(|i| rollout_sequence(&p, i, &levels).unwrap().loss)
            .sum::<f64>()
            / insts.len() as f64;
        let chunked = mean_sequence_loss(&p, &insts, &levels, 4).unwrap();
        assert!((single - chunked).abs() < 1e-12);
    }
}
