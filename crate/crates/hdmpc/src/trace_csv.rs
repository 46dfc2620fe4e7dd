//! Run traces as CSV, one row per step.

use std::io::{Read, Write};

use chrono::NaiveDateTime;
use hdmpc_core::scenario::{BuildingTrace, TraceRecord};
use thiserror::Error;

use crate::res_csv::{format_time, parse_time};

#[derive(Debug, Error)]
pub enum TraceCsvError {
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("unexpected header: {0}")]
    Header(String),
    #[error("row {row}, column `{column}`: {msg}")]
    Field { row: usize, column: String, msg: String },
}

pub fn trace_header(buildings: usize) -> Vec<String> {
    let mut h: Vec<String> = ["time", "p_g", "p_b_cmd", "p_b_act", "p_r"].map(String::from).into();
    for j in 1..=buildings {
        for name in ["temp", "pu_plan", "pu_applied", "dp"] {
            h.push(format!("{name}_{j}"));
        }
    }
    h.extend(["p_ref", "p_g_sp", "request", "iterations", "soc"].map(String::from));
    h
}

/// Writes `trace` with times measured from `origin`. Floats use the shortest
/// representation that reads back exactly.
pub fn write_trace<W: Write>(writer: W, trace: &[TraceRecord], origin: NaiveDateTime) -> Result<(), TraceCsvError> {
    let m = trace.first().map_or(0, |r| r.buildings.len());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(trace_header(m))?;
    for r in trace {
        let mut row = Vec::with_capacity(10 + 4 * m);
        row.push(format_time(origin + chrono::TimeDelta::minutes(r.minute as i64)));
        row.extend([r.p_g, r.p_b_cmd, r.p_b_act, r.p_r].map(|x| x.to_string()));
        for b in &r.buildings {
            row.extend([b.temp, b.pu_plan, b.pu_applied, b.dp].map(|x| x.to_string()));
        }
        row.extend([r.p_ref, r.p_g_sp, r.request].map(|x| x.to_string()));
        row.push(r.iterations.to_string());
        row.push(r.soc.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(reader: R, origin: NaiveDateTime) -> Result<Vec<TraceRecord>, TraceCsvError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    let cols = header.len();
    if cols < 10 || (cols - 10) % 4 != 0 {
        return Err(TraceCsvError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }
    let m = (cols - 10) / 4;
    if header.iter().ne(trace_header(m).iter().map(String::as_str)) {
        return Err(TraceCsvError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let err = |c: usize, msg: String| TraceCsvError::Field {
            row,
            column: header[c].to_string(),
            msg,
        };
        let f = |c: usize| -> Result<f64, TraceCsvError> { rec[c].parse().map_err(|e| err(c, format!("{e}"))) };
        let t = parse_time(&rec[0]).map_err(|e| err(0, e.to_string()))?;
        let minutes = (t - origin).num_minutes();
        let minute = u32::try_from(minutes).map_err(|_| err(0, "time precedes the RES origin".into()))?;
        let mut buildings = Vec::with_capacity(m);
        for j in 0..m {
            let c = 5 + 4 * j;
            buildings.push(BuildingTrace {
                temp: f(c)?,
                pu_plan: f(c + 1)?,
                pu_applied: f(c + 2)?,
                dp: f(c + 3)?,
            });
        }
        let tail = 5 + 4 * m;
        out.push(TraceRecord {
            minute,
            p_g: f(1)?,
            p_b_cmd: f(2)?,
            p_b_act: f(3)?,
            p_r: f(4)?,
            buildings,
            p_ref: f(tail)?,
            p_g_sp: f(tail + 1)?,
            request: f(tail + 2)?,
            iterations: rec[tail + 3].parse().map_err(|e| err(tail + 3, format!("{e}")))?,
            soc: f(tail + 4)?,
        });
    }
    Ok(out)
}
