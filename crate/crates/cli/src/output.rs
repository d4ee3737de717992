//! CSV tables and the JSON metadata sidecar.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Default)]
pub struct Row {
    pub values: Vec<Option<f64>>,
    /// Set when the point failed; the row is then flagged.
    pub error: Option<String>,
}

impl Row {
    pub fn ok(values: Vec<Option<f64>>) -> Self {
        Self { values, error: None }
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    /// Rows carrying an error or a non-finite value.
    pub fn flagged(&self) -> usize {
        self.rows.iter().filter(|r| status(&self.columns, r) != "ok").count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = self.columns.iter().map(|c| escape(c)).collect();
        let _ = writeln!(out, "{},status", header.join(","));
        for row in &self.rows {
            assert_eq!(row.values.len(), self.columns.len(), "row width matches header");
            let cells: Vec<String> = row
                .values
                .iter()
                .map(|v| match v {
                    Some(x) if x.is_finite() => format!("{x:?}"),
                    _ => String::new(),
                })
                .collect();
            let _ = writeln!(out, "{},{}", cells.join(","), escape(&status(&self.columns, row)));
        }
        out
    }
}

fn status(columns: &[String], row: &Row) -> String {
    if let Some(e) = &row.error {
        return format!("error: {e}");
    }
    let bad: Vec<&str> = columns
        .iter()
        .zip(&row.values)
        .filter(|(_, v)| matches!(v, Some(x) if !x.is_finite()))
        .map(|(c, _)| c.as_str())
        .collect();
    if bad.is_empty() {
        "ok".into()
    } else {
        format!("non-finite: {}", bad.join(" "))
    }
}

fn escape(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub struct Artifacts {
    /// File stem suffix (empty for the main table) and table.
    pub tables: Vec<(String, Table)>,
    pub summary: Value,
    pub seed: Option<u64>,
}

pub struct RunInfo<'a> {
    pub analysis: &'a str,
    pub config_bytes: &'a [u8],
    pub frequency_hz: f64,
}

/// Writes `<analysis>[suffix].csv` for every table and `<analysis>.json`.
pub fn write(dir: &Path, info: &RunInfo<'_>, artifacts: &Artifacts) -> Result<Vec<PathBuf>, CliError> {
    let io = |p: &Path, e: std::io::Error| CliError::Io(format!("{}: {e}", p.display()));
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let stem = info.analysis.replace('-', "_");
    let mut written = Vec::new();
    let mut files = Vec::new();
    for (suffix, table) in &artifacts.tables {
        let name = format!("{stem}{suffix}.csv");
        let path = dir.join(&name);
        std::fs::write(&path, table.to_csv()).map_err(|e| io(&path, e))?;
        files.push(serde_json::json!({
            "file": name,
            "columns": table.columns,
            "rows": table.rows.len(),
            "flagged_rows": table.flagged(),
        }));
        written.push(path);
    }
    let sidecar = serde_json::json!({
        "tool": "nwave",
        "version": env!("CARGO_PKG_VERSION"),
        "analysis": info.analysis,
        "config_sha256": sha256_hex(info.config_bytes),
        "seed": artifacts.seed,
        "frequency_hz": info.frequency_hz,
        "tables": files,
        "summary": artifacts.summary,
    });
    let path = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    std::fs::write(&path, text + "\n").map_err(|e| io(&path, e))?;
    written.push(path);
    Ok(written)
}
