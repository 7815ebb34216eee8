use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use rcit::DataMatrix;

use crate::error::{CliError, CliResult};

/// Reads a comma-separated file with a header row; every cell must parse
/// as a float.
pub fn read_csv(path: &Path) -> CliResult<DataMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let names: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if names.is_empty() || names.iter().any(String::is_empty) {
        return Err(CliError::input(format!(
            "{}: header row has empty column names",
            path.display()
        )));
    }
    let mut cells = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                CliError::input(format!(
                    "{}: row {}, column {:?}: cannot parse {cell:?} as a number",
                    path.display(),
                    r + 1,
                    names[c]
                ))
            })?;
            cells.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(CliError::input(format!("{}: no data rows", path.display())));
    }
    let values = DMatrix::from_row_slice(rows, names.len(), &cells);
    Ok(DataMatrix::new(values, names)?)
}

pub fn write_data_csv(path: &Path, data: &DataMatrix) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(data.column_names())?;
    let values = data.values();
    for i in 0..data.n() {
        w.write_record((0..data.p()).map(|j| values[(i, j)].to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rows_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// Pretty JSON to `out`, or to stdout.
pub fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => write_text(path, &text),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

/// `data.csv` -> `data.meta.json`
pub fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.meta.json"))
}

pub fn file_name(path: &Path) -> String {
    path.file_name()
        .map_or_else(String::new, |s| s.to_string_lossy().into_owned())
}

/// `"1..10"`, `"1..=10"` (both inclusive), `"1,4,6"` or a mix of these.
pub fn parse_usize_list(s: &str) -> CliResult<Vec<usize>> {
    let bad = || CliError::input(format!("cannot parse {s:?} as a list of integers"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            let b: usize = b.trim_start_matches('=').trim().parse().map_err(|_| bad())?;
            if b < a {
                return Err(bad());
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

pub fn parse_f64_list(s: &str) -> CliResult<Vec<f64>> {
    let out = s
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse::<f64>()
                .map_err(|_| CliError::input(format!("cannot parse {p:?} as a number")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    if out.is_empty() {
        return Err(CliError::input("empty number list"));
    }
    Ok(out)
}

pub fn split_names(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(String::from)
        .collect()
}
