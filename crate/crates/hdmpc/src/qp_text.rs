//! Line-oriented text form of (mixed-integer) QPs.
//!
//! ```text
//! n = 2
//! hessian = 1 0        # one line per row
//! hessian = 0 1
//! linear = -2 -4
//! constant = 0
//! ineq = 1 1 | 1       # coefficients | rhs
//! eq = 1 -1 | 0
//! lower = 0 -inf
//! upper = inf inf
//! binary = 1
//! ```

use std::fmt::Write as _;

use hdmpc_core::linalg::Matrix;
use hdmpc_core::opt::{MixedIntegerQP, QuadraticProgram};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum QpTextError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("`n` must come first")]
    MissingDimension,
    #[error("expected {expected} hessian rows, found {found}")]
    HessianRows { expected: usize, found: usize },
}

fn numbers(s: &str, line: usize) -> Result<Vec<f64>, QpTextError> {
    s.split_whitespace()
        .map(|t| {
            t.parse::<f64>().map_err(|e| QpTextError::Line {
                line,
                msg: format!("`{t}`: {e}"),
            })
        })
        .collect()
}

fn exact(v: Vec<f64>, n: usize, line: usize) -> Result<Vec<f64>, QpTextError> {
    if v.len() != n {
        return Err(QpTextError::Line {
            line,
            msg: format!("expected {n} values, found {}", v.len()),
        });
    }
    Ok(v)
}

pub fn parse_qp(text: &str) -> Result<MixedIntegerQP, QpTextError> {
    let mut qp: Option<QuadraticProgram> = None;
    let mut hessian_rows = Vec::new();
    let mut binaries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| QpTextError::Line {
            line,
            msg: "expected `key = value`".into(),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key == "n" {
            if qp.is_some() {
                return Err(QpTextError::Line {
                    line,
                    msg: "`n` given twice".into(),
                });
            }
            let n: usize = value.parse().map_err(|e| QpTextError::Line {
                line,
                msg: format!("`{value}`: {e}"),
            })?;
            qp = Some(QuadraticProgram::new(n));
            continue;
        }
        let p = qp.as_mut().ok_or(QpTextError::MissingDimension)?;
        let n = p.num_vars();
        match key {
            "hessian" => hessian_rows.push(exact(numbers(value, line)?, n, line)?),
            "linear" => p.linear = exact(numbers(value, line)?, n, line)?,
            "lower" => p.lower = exact(numbers(value, line)?, n, line)?,
            "upper" => p.upper = exact(numbers(value, line)?, n, line)?,
            "constant" => {
                p.constant = exact(numbers(value, line)?, 1, line)?[0];
            }
            "ineq" | "eq" => {
                let (lhs, rhs) = value.split_once('|').ok_or_else(|| QpTextError::Line {
                    line,
                    msg: "expected `coefficients | rhs`".into(),
                })?;
                let row = exact(numbers(lhs, line)?, n, line)?;
                let rhs = exact(numbers(rhs, line)?, 1, line)?[0];
                if key == "ineq" {
                    p.add_ineq(&row, rhs);
                } else {
                    p.add_eq(&row, rhs);
                }
            }
            "binary" => {
                for t in value.split_whitespace() {
                    let i: usize = t.parse().map_err(|e| QpTextError::Line {
                        line,
                        msg: format!("`{t}`: {e}"),
                    })?;
                    binaries.push(i);
                }
            }
            _ => {
                return Err(QpTextError::Line {
                    line,
                    msg: format!("unknown key `{key}`"),
                })
            }
        }
    }
    let mut base = qp.ok_or(QpTextError::MissingDimension)?;
    let n = base.num_vars();
    if !hessian_rows.is_empty() {
        if hessian_rows.len() != n {
            return Err(QpTextError::HessianRows {
                expected: n,
                found: hessian_rows.len(),
            });
        }
        base.hessian = Matrix::from_rows(&hessian_rows);
    }
    Ok(MixedIntegerQP {
        base,
        binary_indices: binaries,
    })
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn format_qp(p: &MixedIntegerQP) -> String {
    let q = &p.base;
    let mut s = String::new();
    let _ = writeln!(s, "n = {}", q.num_vars());
    for i in 0..q.hessian.rows() {
        let _ = writeln!(s, "hessian = {}", join(q.hessian.row(i)));
    }
    let _ = writeln!(s, "linear = {}", join(&q.linear));
    let _ = writeln!(s, "constant = {}", q.constant);
    for i in 0..q.ineq_lhs.rows() {
        let _ = writeln!(s, "ineq = {} | {}", join(q.ineq_lhs.row(i)), q.ineq_rhs[i]);
    }
    for i in 0..q.eq_lhs.rows() {
        let _ = writeln!(s, "eq = {} | {}", join(q.eq_lhs.row(i)), q.eq_rhs[i]);
    }
    let _ = writeln!(s, "lower = {}", join(&q.lower));
    let _ = writeln!(s, "upper = {}", join(&q.upper));
    if !p.binary_indices.is_empty() {
        let idx: Vec<String> = p.binary_indices.iter().map(|i| i.to_string()).collect();
        let _ = writeln!(s, "binary = {}", idx.join(" "));
    }
    s
}
