//! CSV tables, JSON run records and content-addressed file names.

use crate::config::{ExperimentConfig, Format, IoConfig};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    I(u64),
    S(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::I(x as u64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::S(x.to_string())
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::S(x.to_string())
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::F)
    }
}

/// 17 significant digits: enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            for (i, c) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                match c {
                    Cell::F(x) => out.push_str(&format_float(*x)),
                    Cell::I(x) => write!(out, "{x}").unwrap(),
                    Cell::S(s) => out.push_str(s),
                    Cell::Empty => {}
                }
            }
            out.push('\n');
        }
        out
    }
}

/// First 12 hex digits of the SHA-256 of the canonical configuration, with
/// the output block reset so that moving the output directory keeps names.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.io = IoConfig::default();
    let text = c.canonical();
    let mut h = Sha256::new();
    h.update(format!("config {}\0", text.len()));
    h.update(text.as_bytes());
    h.finalize().iter().take(6).map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize)]
pub struct RunRecord<'a> {
    pub command: &'a str,
    pub hash: String,
    pub exit_code: i32,
    pub config: &'a ExperimentConfig,
    /// Wall-clock seconds per phase.
    pub timings: Vec<(String, f64)>,
    pub outputs: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

/// Paths that [`write_outputs`] will produce.
pub fn output_paths(io: &IoConfig, command: &str, hash: &str) -> (Option<PathBuf>, Option<PathBuf>) {
    let stem = io.outdir.join(format!("{command}-{hash}"));
    let csv = matches!(io.format, Format::Csv | Format::Both).then(|| stem.with_extension("csv"));
    let json = matches!(io.format, Format::Json | Format::Both).then(|| stem.with_extension("json"));
    (csv, json)
}

pub fn write_outputs(
    io: &IoConfig,
    record: &mut RunRecord<'_>,
    table: &Table,
) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&io.outdir)?;
    let (csv, json) = output_paths(io, record.command, &record.hash);
    record.outputs = [csv.clone(), json.clone()].into_iter().flatten().collect();
    if let Some(p) = &csv {
        write_atomic(p, table.to_csv().as_bytes())?;
    }
    if let Some(p) = &json {
        let text = serde_json::to_string_pretty(record).expect("record serializes");
        write_atomic(p, (text + "\n").as_bytes())?;
    }
    Ok(record.outputs.clone())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(tmp, path)
}
