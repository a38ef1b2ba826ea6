use super::fill::fill_linear;
use super::series::TimeSeries;
use crate::error::{Error, Result};

/// `T` successive lag windows cut from one stretch of a series.
///
/// Positions `0..lag` form the first window; positions `lag..lag + T` are the
/// one-step-ahead targets of steps `0..T`. Window `j` covers positions
/// `j..j + lag`, so each window is the previous one shifted by one.
#[derive(Clone, Debug)]
pub struct SequenceInstance {
    /// Series index of position 0.
    pub start: usize,
    pub lag: usize,
    pub steps: usize,
    /// Raw values, sentinels at missing positions. Length `lag + steps`.
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
    /// First window with any gaps filled by linear interpolation.
    pub first_window: Vec<f64>,
    /// Whether `first_window` needed filling.
    pub bootstrapped: bool,
}

impl SequenceInstance {
    /// Series index of the forecast origin of step 0.
    pub fn origin(&self) -> usize {
        self.start + self.lag - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Raw window of step `j`, sentinels included.
    pub fn raw_window(&self, j: usize) -> &[f64] {
        &self.values[j..j + self.lag]
    }

    pub fn target(&self, j: usize) -> Option<f64> {
        let p = self.lag + j;
        self.mask[p].then(|| self.values[p])
    }

    pub fn target_mask(&self, j: usize) -> bool {
        self.mask[self.lag + j]
    }

    /// Targets in step order, missing ones as `None`.
    pub fn targets(&self) -> impl Iterator<Item = Option<f64>> + '_ {
        (0..self.steps).map(|j| self.target(j))
    }
}

/// Cuts instances of `steps` windows of length `lag`, one every `stride`
/// positions. Gaps inside an instance's first window are bootstrapped by
/// linear interpolation over the whole series.
pub fn make_instances(
    series: &TimeSeries,
    lag: usize,
    steps: usize,
    stride: usize,
) -> Result<Vec<SequenceInstance>> {
    if lag == 0 || steps == 0 || stride == 0 {
        return Err(Error::Config("lag, steps and stride must be positive".into()));
    }
    let span = lag + steps;
    if series.len() < span {
        return Err(Error::Data(format!(
            "series of length {} is shorter than lag + steps = {span}",
            series.len()
        )));
    }
    let mut filled: Option<Vec<f64>> = None;
    let mut out = Vec::with_capacity((series.len() - span) / stride + 1);
    let mut start = 0;
    while start + span <= series.len() {
        let values = series.raw_values()[start..start + span].to_vec();
        let mask = series.mask()[start..start + span].to_vec();
        let bootstrapped = mask[..lag].iter().any(|m| !m);
        let first_window = if bootstrapped {
            if filled.is_none() {
                filled = Some(fill_linear(series.raw_values(), series.mask())?);
            }
            filled.as_ref().expect("just filled")[start..start + lag].to_vec()
        } else {
            values[..lag].to_vec()
        };
        out.push(SequenceInstance {
            start,
            lag,
            steps,
            values,
            mask,
            first_window,
            bootstrapped,
        });
        start += stride;
    }
    Ok(out)
}
