//! RES power traces: `timestamp_iso8601,power_w` rows on a 15-minute grid.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{NaiveDateTime, TimeDelta};
use thiserror::Error;

pub const RES_HEADER: [&str; 2] = ["timestamp_iso8601", "power_w"];
pub const TIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Debug, Error)]
pub enum ResTraceError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("header must be `timestamp_iso8601,power_w`")]
    Header,
    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },
    #[error("row {row}: expected {expected}, found {found}")]
    Spacing {
        row: usize,
        expected: NaiveDateTime,
        found: NaiveDateTime,
    },
    #[error("trace is empty")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResTrace {
    /// Timestamp of the first sample.
    pub origin: NaiveDateTime,
    /// Power, W, one value per 15 minutes.
    pub values: Vec<f64>,
}

impl ResTrace {
    /// Timestamp `minutes` after the origin.
    pub fn time_at(&self, minutes: u32) -> NaiveDateTime {
        self.origin + TimeDelta::minutes(minutes as i64)
    }
}

pub fn parse_time(s: &str) -> Result<NaiveDateTime, chrono::ParseError> {
    NaiveDateTime::parse_from_str(s.trim_end_matches('Z'), TIME_FORMAT)
}

pub fn format_time(t: NaiveDateTime) -> String {
    t.format(TIME_FORMAT).to_string()
}

pub fn parse_res_trace<R: Read>(reader: R) -> Result<ResTrace, ResTraceError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    if rdr.headers()?.iter().ne(RES_HEADER) {
        return Err(ResTraceError::Header);
    }
    let step = TimeDelta::minutes(15);
    let mut origin = None;
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec?;
        let bad = |msg: String| ResTraceError::Row { row, msg };
        if rec.len() != 2 {
            return Err(bad(format!("expected 2 fields, found {}", rec.len())));
        }
        let t = parse_time(&rec[0]).map_err(|e| bad(format!("timestamp `{}`: {e}", &rec[0])))?;
        let p: f64 = rec[1].parse().map_err(|e| bad(format!("power `{}`: {e}", &rec[1])))?;
        if !p.is_finite() {
            return Err(bad(format!("power `{}` is not finite", &rec[1])));
        }
        let origin = *origin.get_or_insert(t);
        let expected = origin + step * values.len() as i32;
        if t != expected {
            return Err(ResTraceError::Spacing { row, expected, found: t });
        }
        values.push(p);
    }
    let origin = origin.ok_or(ResTraceError::Empty)?;
    Ok(ResTrace { origin, values })
}

pub fn read_res_trace(path: &Path) -> Result<ResTrace, ResTraceError> {
    parse_res_trace(std::fs::File::open(path)?)
}

pub fn write_res_trace<W: Write>(writer: W, trace: &ResTrace) -> Result<(), ResTraceError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RES_HEADER)?;
    for (i, p) in trace.values.iter().enumerate() {
        w.write_record([format_time(trace.time_at(15 * i as u32)), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
