//! CSV output.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::bench::BenchResult;
use crate::error::{BenchError, Result};

pub const CSV_HEADER: &str = "method,codec,events,wall_ms,cpu_ms,unzip_ms,events_per_sec,bytes";

/// Writes `results` as CSV with a header row.
pub fn emit_csv(results: &[BenchResult], path: &Path) -> Result<()> {
    write_rows(results, path)
}

pub fn read_csv(path: &Path) -> Result<Vec<BenchResult>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Writes any serializable rows as CSV. Fails on an empty slice.
pub fn write_rows<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(BenchError::EmptyResults);
    }
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// `<csv>.meta.json`, next to the CSV.
pub fn meta_path(csv: &Path) -> PathBuf {
    let mut name = csv.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    csv.with_file_name(name)
}

/// Records the dataset seed and parameters for a CSV file.
pub fn write_meta(csv: &Path, meta: &serde_json::Value) -> Result<()> {
    std::fs::write(meta_path(csv), serde_json::to_vec_pretty(meta)?)?;
    Ok(())
}
