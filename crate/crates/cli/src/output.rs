use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use selfsel::optimizer::TraceRow;

use crate::CliError;

pub fn columns(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().copied().collect()).collect()
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Runtime(format!("serialize {name}: {e}")))?;
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}

pub fn write_trace(
    dir: &Path,
    name: &str,
    version: &str,
    hash: &str,
    rows: &[TraceRow],
) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut out = BufWriter::new(fs::File::create(&path)?);
    writeln!(out, "# version={version} config_hash={hash}")?;
    writeln!(out, "{}", TraceRow::CSV_HEADER)?;
    for r in rows {
        writeln!(out, "{}", r.csv())?;
    }
    out.flush()?;
    Ok(path)
}
