//! Artifact writers: CSV tables, JSON sidecars, and the run manifest.
//!
//! All numeric cells are rendered with 12 significant digits and rows are
//! emitted in deterministic (row-major) order, so identical runs produce
//! byte-identical CSV files regardless of thread count.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

/// One CSV cell: a number (rendered as 12-significant-digit scientific
/// notation) or a literal string such as a status word.
#[derive(Debug, Clone)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
}

impl Cell {
    fn render(&self) -> Result<String, EmitError> {
        match self {
            Cell::Num(v) => {
                if !v.is_finite() {
                    return Err(EmitError::NonFinite(*v));
                }
                Ok(format!("{v:.11e}"))
            }
            Cell::Int(v) => Ok(v.to_string()),
            Cell::Text(s) => {
                debug_assert!(!s.contains([',', '\n', '"']));
                Ok(s.clone())
            }
        }
    }
}

/// Emission failure: refused content or plain I/O.
#[derive(Debug)]
pub enum EmitError {
    /// A NaN or infinity reached the writer; numerical-failure exit.
    NonFinite(f64),
    Io(io::Error),
}

impl std::fmt::Display for EmitError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EmitError::NonFinite(v) => write!(f, "refusing to write non-finite value {v}"),
            EmitError::Io(e) => write!(f, "I/O error: {e}"),
        }
    }
}

impl std::error::Error for EmitError {}

impl From<io::Error> for EmitError {
    fn from(e: io::Error) -> Self {
        EmitError::Io(e)
    }
}

/// Column metadata shared by the CSV header and the JSON sidecar.
#[derive(Debug, Clone, Serialize)]
pub struct Column {
    pub name: String,
    pub unit: String,
}

impl Column {
    pub fn new(name: &str, unit: &str) -> Self {
        Self {
            name: name.into(),
            unit: unit.into(),
        }
    }
}

/// Axis metadata for the JSON sidecar.
#[derive(Debug, Clone, Serialize)]
pub struct AxisMeta {
    pub name: String,
    pub unit: String,
    pub points: usize,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl AxisMeta {
    pub fn new(name: &str, unit: &str, values: &[f64]) -> Self {
        Self {
            name: name.into(),
            unit: unit.into(),
            points: values.len(),
            min: values.first().copied(),
            max: values.last().copied(),
        }
    }
}

#[derive(Serialize)]
struct Sidecar<'a> {
    command: &'a str,
    csv: &'a str,
    columns: &'a [Column],
    axes: &'a [AxisMeta],
}

/// One CSV table plus its JSON sidecar; returns the file names written.
pub fn write_table(
    out_dir: &Path,
    command: &str,
    columns: &[Column],
    axes: &[AxisMeta],
    rows: &[Vec<Cell>],
) -> Result<Vec<String>, EmitError> {
    let csv_name = format!("{command}.csv");
    let json_name = format!("{command}.json");

    let mut text = String::new();
    let header: Vec<String> = columns.iter().map(|c| c.name.clone()).collect();
    text.push_str(&header.join(","));
    text.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), columns.len());
        let cells: Result<Vec<String>, EmitError> = row.iter().map(Cell::render).collect();
        text.push_str(&cells?.join(","));
        text.push('\n');
    }
    write_atomic(&out_dir.join(&csv_name), text.as_bytes())?;

    let sidecar = Sidecar {
        command,
        csv: &csv_name,
        columns,
        axes,
    };
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    write_atomic(&out_dir.join(&json_name), format!("{json}\n").as_bytes())?;

    Ok(vec![csv_name, json_name])
}

/// Run manifest: resolved configuration echo, version, wall time, artifact
/// list, and per-command diagnostics. Written exactly once per run.
#[derive(Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
    pub config: serde_json::Value,
    pub diagnostics: serde_json::Value,
}

pub fn write_manifest(out_dir: &Path, manifest: &Manifest) -> Result<PathBuf, EmitError> {
    let path = out_dir.join("manifest.json");
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    write_atomic(&path, format!("{json}\n").as_bytes())?;
    Ok(path)
}

/// Write through a temporary file so a crashed run never leaves a truncated
/// artifact behind.
fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_renders_twelve_significant_digits() {
        assert_eq!(Cell::Num(0.34).render().unwrap(), "3.40000000000e-1");
        assert_eq!(Cell::Num(-1.0 / 3.0).render().unwrap(), "-3.33333333333e-1");
        assert_eq!(Cell::Int(42).render().unwrap(), "42");
    }

    #[test]
    fn non_finite_cells_are_refused() {
        assert!(Cell::Num(f64::NAN).render().is_err());
        assert!(Cell::Num(f64::INFINITY).render().is_err());
    }

    #[test]
    fn tables_write_header_only_when_empty() {
        let dir = tempfile::tempdir().unwrap();
        let cols = [Column::new("x", "MHz"), Column::new("y", "1")];
        let written = write_table(dir.path(), "probe", &cols, &[], &[]).unwrap();
        assert_eq!(written, vec!["probe.csv".to_string(), "probe.json".to_string()]);
        let text = fs::read_to_string(dir.path().join("probe.csv")).unwrap();
        assert_eq!(text, "x,y\n");
    }
}
