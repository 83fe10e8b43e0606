//! Matrix files, ratings reports and trajectory tables.
//!
//! Machine formats print floats so that they parse back to the same bits:
//! CSV uses 17 significant digits, JSON the shortest representation that
//! round-trips.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::elo::SimulationResult;
use crate::error::{Error, Result};
use crate::game::PayoffMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// `x` with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    format!("{x:.16e}")
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    n: usize,
    entries: Vec<Vec<f64>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|&x| fmt17(x)).collect();
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

pub fn matrix_to_json(m: &DMatrix<f64>) -> String {
    let doc = MatrixJson { n: m.nrows(), entries: rows_of(m) };
    serde_json::to_string_pretty(&doc).expect("matrix serializes")
}

pub fn matrix_to_string(m: &DMatrix<f64>, format: Format) -> String {
    match format {
        Format::Csv => matrix_to_csv(m),
        Format::Json => matrix_to_json(m),
    }
}

/// Parses a square matrix from CSV. A first row whose first cell is not a
/// number is taken as a header and skipped. Errors carry 1-based line numbers.
pub fn parse_matrix_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut first = true;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Parse(format!("line {line}: {e}"))
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(|c| c.is_empty()) {
            continue;
        }
        if first {
            first = false;
            if record.get(0).is_some_and(|c| c.parse::<f64>().is_err()) {
                continue;
            }
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(col, c)| {
                c.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {line}, column {}: not a number: {c:?}", col + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(prev) = rows.first() {
            if prev.len() != row.len() {
                return Err(Error::Parse(format!(
                    "line {line}: expected {} values, found {}",
                    prev.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 {
        return Err(Error::Parse("no matrix rows".into()));
    }
    if rows[0].len() != n {
        return Err(Error::NotSquare { rows: n, cols: rows[0].len() });
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn parse_matrix_json(text: &str) -> Result<DMatrix<f64>> {
    let doc: MatrixJson = serde_json::from_str(text)
        .map_err(|e| Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column())))?;
    if doc.entries.len() != doc.n {
        return Err(Error::SizeMismatch { expected: doc.n, found: doc.entries.len() });
    }
    for (i, row) in doc.entries.iter().enumerate() {
        if row.len() != doc.n {
            return Err(Error::Parse(format!("row {i}: expected {} values, found {}", doc.n, row.len())));
        }
    }
    Ok(DMatrix::from_fn(doc.n, doc.n, |i, j| doc.entries[i][j]))
}

/// JSON if the text starts with `{`, CSV otherwise.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    if text.trim_start().starts_with('{') {
        parse_matrix_json(text)
    } else {
        parse_matrix_csv(text)
    }
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    parse_matrix(&std::fs::read_to_string(path)?)
}

/// Reads and validates a game.
pub fn read_game(path: &Path) -> Result<PayoffMatrix> {
    PayoffMatrix::new(read_matrix(path)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingsReport {
    pub method: String,
    pub beta: Option<f64>,
    pub ratings: Vec<f64>,
    pub certified: bool,
    pub diagnostics: serde_json::Value,
}

/// Long-format table with columns `step, player_index, rating_mean`; steps
/// start at 1.
pub fn trajectory_csv(sim: &SimulationResult) -> String {
    let mut s = String::from("step,player_index,rating_mean\n");
    for (t, row) in sim.trajectory.iter().enumerate() {
        for (i, &x) in row.iter().enumerate() {
            let _ = writeln!(s, "{},{},{}", t + 1, i, fmt17(x));
        }
    }
    s
}
