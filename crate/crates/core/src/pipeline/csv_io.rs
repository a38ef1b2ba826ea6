//! CSV ingestion and export. The format is a header row followed by
//! `timestamp,power` rows; an empty `power` cell marks a missing value.

use std::path::Path;

use chrono::{DateTime, NaiveDateTime, Utc};

use super::series::{TimeSeries, DEFAULT_RESOLUTION_SECS, MISSING};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColumnSpec {
    pub timestamp: String,
    pub value: String,
    /// Allowed deviation from the inferred sampling interval, seconds.
    pub spacing_tolerance: i64,
}

impl Default for ColumnSpec {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            value: "power".into(),
            spacing_tolerance: 0,
        }
    }
}

/// Epoch seconds, RFC 3339, or a naive `YYYY-MM-DD[T ]HH:MM[:SS]` taken as UTC.
pub fn parse_timestamp(text: &str) -> Option<i64> {
    let t = text.trim();
    if let Ok(secs) = t.parse::<i64>() {
        return Some(secs);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(t) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(t, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    None
}

pub fn format_timestamp(secs: i64) -> String {
    match DateTime::<Utc>::from_timestamp(secs, 0) {
        Some(dt) => dt.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        None => secs.to_string(),
    }
}

fn parse_value(text: &str) -> Option<Option<f64>> {
    let t = text.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("nan") || t.eq_ignore_ascii_case("na") {
        return Some(None);
    }
    let v = t.parse::<f64>().ok()?;
    Some(v.is_finite().then_some(v))
}

pub fn ingest_csv(path: &Path, columns: &ColumnSpec) -> Result<TimeSeries> {
    let file = std::fs::File::open(path)?;
    read_csv(file, path, columns)
}

pub fn read_csv<R: std::io::Read>(reader: R, path: &Path, columns: &ColumnSpec) -> Result<TimeSeries> {
    let err = |row: u64, message: String| Error::Csv {
        path: path.to_path_buf(),
        row,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| err(1, format!("missing column {name:?}")))
    };
    let ts_col = find(&columns.timestamp)?;
    let val_col = find(&columns.value)?;

    let mut stamps: Vec<i64> = Vec::new();
    let mut values = Vec::new();
    let mut mask = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let row = e.position().map_or(0, |p| p.line());
            err(row, e.to_string())
        })?;
        let row = record.position().map_or(0, |p| p.line());
        let ts_text = record
            .get(ts_col)
            .ok_or_else(|| err(row, "missing timestamp field".into()))?;
        let ts = parse_timestamp(ts_text)
            .ok_or_else(|| err(row, format!("unparseable timestamp {ts_text:?}")))?;
        let val_text = record.get(val_col).unwrap_or("");
        let value = parse_value(val_text)
            .ok_or_else(|| err(row, format!("unparseable value {val_text:?}")))?;

        if let Some(&prev) = stamps.last() {
            if ts == prev {
                return Err(err(row, format!("duplicate timestamp {ts_text:?}")));
            }
            if ts < prev {
                return Err(err(row, format!("timestamp {ts_text:?} goes backwards")));
            }
            if stamps.len() >= 2 {
                let resolution = stamps[1] - stamps[0];
                if ((ts - prev) - resolution).abs() > columns.spacing_tolerance {
                    return Err(err(
                        row,
                        format!("irregular spacing: {}s step, expected {resolution}s", ts - prev),
                    ));
                }
            }
        }
        stamps.push(ts);
        values.push(value.unwrap_or(MISSING));
        mask.push(value.is_some());
    }
    let start = stamps.first().copied().unwrap_or(0);
    let resolution = if stamps.len() >= 2 {
        stamps[1] - stamps[0]
    } else {
        DEFAULT_RESOLUTION_SECS
    };
    TimeSeries::new(start, resolution, values, mask)
}

pub fn write_csv<W: std::io::Write>(writer: W, series: &TimeSeries, columns: &ColumnSpec) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record([columns.timestamp.as_str(), columns.value.as_str()])
        .map_err(io)?;
    for i in 0..series.len() {
        let value = series.get(i).map(|v| v.to_string()).unwrap_or_default();
        w.write_record([format_timestamp(series.timestamp(i)), value])
            .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
