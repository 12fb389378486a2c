//! CSV tables and JSON sidecars.
//!
//! Numbers are written in shortest round-trip scientific form so repeated
//! runs produce identical bytes and readers recover every bit.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::{cache, config::RunConfig, CliError};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Flag(bool),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_owned())
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Flag(x)
    }
}

pub fn number(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:e}")
    }
}

fn render(cell: &Cell) -> String {
    match cell {
        Cell::Num(x) => number(*x),
        Cell::Int(i) => i.to_string(),
        Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
        Cell::Text(s) => s.clone(),
        Cell::Flag(b) => b.to_string(),
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// `#`-prefixed comment lines, the header row, then the data.
    pub fn to_csv(&self, comments: &[String]) -> String {
        let mut s = String::new();
        for c in comments {
            let _ = writeln!(s, "# {c}");
        }
        let _ = writeln!(s, "{}", self.columns.join(","));
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(render).collect();
            let _ = writeln!(s, "{}", line.join(","));
        }
        s
    }
}

#[derive(Debug, Serialize)]
struct Meta<'a> {
    observable: &'a str,
    version: &'a str,
    mode: &'a str,
    config_sha256: String,
    csv: &'a str,
    columns: &'a [String],
    rows: usize,
    config: &'a RunConfig,
    summary: &'a Value,
}

/// Hash of the configuration with the output directory cleared, so the same
/// run written to two places carries the same fingerprint.
pub fn config_hash(config: &RunConfig) -> String {
    let mut c = config.clone();
    c.run.output_dir = PathBuf::new();
    cache::hex(&cache::key("config", &c))
}

/// Write `<stem>.csv` and `<stem>.meta.json` under the output directory.
pub fn write(config: &RunConfig, stem: &str, table: &Table, summary: &Value) -> Result<Vec<PathBuf>, CliError> {
    let dir = &config.run.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let hash = config_hash(config);
    let csv_name = format!("{stem}.csv");
    let comments = [
        format!("wqed {} {stem}", env!("CARGO_PKG_VERSION")),
        format!(
            "gamma={} R={} k0R_over_pi={} delta={} gamma1_fraction={} mode={}",
            number(config.model.gamma),
            number(config.model.r),
            number(config.model.k0r_over_pi),
            number(config.model.delta),
            number(config.model.gamma1_fraction),
            config.run.mode.as_str()
        ),
        format!("config_sha256={hash}"),
    ];
    let csv_path = dir.join(&csv_name);
    write_file(&csv_path, table.to_csv(&comments).as_bytes())?;
    let meta = Meta {
        observable: stem,
        version: env!("CARGO_PKG_VERSION"),
        mode: config.run.mode.as_str(),
        config_sha256: hash,
        csv: &csv_name,
        columns: &table.columns,
        rows: table.rows.len(),
        config,
        summary,
    };
    let meta_path = dir.join(format!("{stem}.meta.json"));
    let mut text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    text.push('\n');
    write_file(&meta_path, text.as_bytes())?;
    Ok(vec![csv_path, meta_path])
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
