//! Atomic CSV/JSON emission. Files are written to a temporary sibling and
//! renamed into place, so readers never observe a partial artifact.

use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use tempfile::NamedTempFile;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp =
        NamedTempFile::new_in(dir).with_context(|| format!("creating temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Serializes rows with a header; LF line endings.
pub fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Rows as CSV with a header, or as a JSON array of objects.
pub fn table_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>, format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Csv => csv_bytes(rows),
        Format::Json => json_bytes(&serde_json::to_value(rows.into_iter().collect::<Vec<_>>())?),
    }
}

/// `out.csv` -> `out.json`; a JSON output gets `out.meta.json` instead.
pub fn sidecar_path(path: &Path) -> PathBuf {
    if path.extension().is_some_and(|e| e == "json") {
        path.with_extension("meta.json")
    } else {
        path.with_extension("json")
    }
}

pub fn json_bytes(value: &Value) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes `bytes` to `out`, or to stdout when no path was given.
pub fn write_plain(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, bytes),
        None => Ok(io::stdout().lock().write_all(bytes)?),
    }
}

fn timestamp() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Writes `bytes` to `out`, or to stdout when no path was given. File
/// outputs get a JSON sidecar with the resolved config and seed.
pub fn emit(out: Option<&Path>, bytes: &[u8], config: &Value, seed: Option<u64>, extra: Value) -> Result<()> {
    match out {
        None => write_plain(None, bytes),
        Some(path) => {
            write_atomic(path, bytes)?;
            let mut meta = json!({
                "config": config,
                "seed": seed,
                "timestamp_unix": timestamp(),
                "version": env!("CARGO_PKG_VERSION"),
            });
            if let (Value::Object(m), Value::Object(e)) = (&mut meta, extra) {
                m.extend(e);
            }
            write_atomic(&sidecar_path(path), &json_bytes(&meta)?)
        }
    }
}
