use crate::model::QuantileFan;

/// Pinball loss of one quantile forecast.
#[inline]
pub fn pinball_single(x: f64, q: f64, alpha: f64) -> f64 {
    alpha * (x - q).max(0.0) + (1.0 - alpha) * (q - x).max(0.0)
}

/// Derivative of [`pinball_single`] w.r.t. the forecast `q`. At `x == q`
/// the `x ≥ q` branch is used.
#[inline]
pub fn pinball_grad(x: f64, q: f64, alpha: f64) -> f64 {
    if x >= q {
        -alpha
    } else {
        1.0 - alpha
    }
}

/// Summed pinball loss over a fan. `values[i]` is the forecast at
/// `levels[i]`.
pub fn pinball(x: f64, values: &[f64], levels: &[f64]) -> f64 {
    debug_assert_eq!(values.len(), levels.len());
    values
        .iter()
        .zip(levels)
        .map(|(q, a)| pinball_single(x, *q, *a))
        .sum()
}

pub fn pinball_fan(x: f64, fan: &QuantileFan) -> f64 {
    pinball(x, &fan.values, &fan.levels)
}

/// Pinball loss counted only when the target was observed.
pub fn masked_step_loss(target: f64, observed: bool, values: &[f64], levels: &[f64]) -> f64 {
    if observed {
        pinball(target, values, levels)
    } else {
        0.0
    }
}
