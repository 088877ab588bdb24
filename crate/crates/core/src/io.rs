// SPDX-License-Identifier: Apache-2.0

//! CSV and JSON output. Floats are written in shortest round-trip form, so a
//! table read back parses to the same bits.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Bool(bool),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(x) => format_float(*x),
            Cell::Int(k) => k.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<u64> for Cell {
    fn from(k: u64) -> Self {
        Cell::Int(k)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Float)
    }
}

/// Shortest string that parses back to `x`; `NaN`, `inf`, `-inf` otherwise.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        // Rust's float Display is the shortest round-trip representation
        format!("{x}")
    }
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::invalid(format!(
                "CSV row has {} cells for {} columns",
                row.len(),
                header.len()
            )));
        }
        w.write_record(row.iter().map(Cell::render))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// A trace read back from CSV: `t`, `p1` and, when present, `p1_se`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
}

/// Reads columns `t` and `p1` (or the first two columns when those names
/// are absent), plus `p1_se` if there is one.
pub fn read_trace_csv(path: &Path) -> Result<TraceTable> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.len() < 2 {
        return Err(Error::invalid(format!("{}: need at least two columns", path.display())));
    }
    let find = |name: &str| header.iter().position(|h| h == name);
    let it = find("t").unwrap_or(0);
    let iv = find("p1").unwrap_or(if it == 0 { 1 } else { 0 });
    let ise = find("p1_se");
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut stderr = ise.map(|_| Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let get = |k: usize| -> Result<f64> {
            let cell = rec.get(k).unwrap_or("").trim();
            cell.parse::<f64>().map_err(|_| {
                Error::invalid(format!(
                    "{}: row {}, column '{}': '{cell}' is not a number",
                    path.display(),
                    line + 2,
                    header[k]
                ))
            })
        };
        times.push(get(it)?);
        values.push(get(iv)?);
        if let (Some(k), Some(se)) = (ise, stderr.as_mut()) {
            se.push(get(k)?);
        }
    }
    Ok(TraceTable { times, values, stderr })
}
