//! Data handling: ingestion, min-max scaling, simulated missingness,
//! sequence instances and chronological splits.

mod csv_io;
mod fill;
mod instances;
mod mcar;
mod normalize;
mod series;
pub mod synth;

pub use csv_io::{format_timestamp, ingest_csv, parse_timestamp, read_csv, write_csv, ColumnSpec};
pub use fill::fill_linear;
pub use instances::{make_instances, SequenceInstance};
pub use mcar::apply_mcar;
pub use normalize::{minmax_fit_apply, MinMax};
pub use series::{SplitSpec, TimeSeries, DEFAULT_RESOLUTION_SECS, MISSING};

use crate::error::{Error, Result};

/// Converts a lag given in minutes to whole steps at `resolution` seconds.
pub fn lag_steps(lag_minutes: u32, resolution: i64) -> Result<usize> {
    let secs = i64::from(lag_minutes) * 60;
    if resolution <= 0 || secs == 0 || secs % resolution != 0 {
        return Err(Error::Config(format!(
            "lag of {lag_minutes} min is not a positive multiple of the {resolution}s resolution"
        )));
    }
    Ok((secs / resolution) as usize)
}
