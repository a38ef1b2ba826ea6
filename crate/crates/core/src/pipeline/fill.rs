use crate::error::{Error, Result};

/// Linear interpolation over missing runs, holding the nearest observation
/// across leading and trailing runs. Observed positions are copied through.
pub fn fill_linear(values: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    let observed: Vec<usize> = (0..values.len()).filter(|&i| mask[i]).collect();
    let (Some(&first), Some(&last)) = (observed.first(), observed.last()) else {
        return Err(Error::Data("cannot interpolate a series with no observations".into()));
    };
    let mut out = values.to_vec();
    out[..first].fill(values[first]);
    out[last + 1..].fill(values[last]);
    for pair in observed.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b - a < 2 {
            continue;
        }
        let (va, vb) = (values[a], values[b]);
        let span = (b - a) as f64;
        for (k, slot) in out[a + 1..b].iter_mut().enumerate() {
            let t = (k + 1) as f64 / span;
            *slot = va + (vb - va) * t;
        }
    }
    Ok(out)
}
