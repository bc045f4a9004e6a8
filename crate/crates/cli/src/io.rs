//! CSV and JSON files. Every file starts with a `#` line (or a top-level
//! `config` field for JSON) holding the resolved configuration.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use qbgraph::{DataMatrix, PrecisionMatrix};
use serde_json::Value;

use crate::error::{CliError, Result};

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), fmt_f64)
}

pub fn header_line(echo: &Value) -> String {
    format!("# qbgraph {echo}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

/// Write `header` followed by `rows`, one comma-separated line each.
pub fn write_lines(
    path: &Path,
    header: &str,
    rows: impl IntoIterator<Item = String>,
) -> Result<()> {
    let mut w = create(path)?;
    let err = |e| CliError::io(path, e);
    writeln!(w, "{header}").map_err(err)?;
    for r in rows {
        writeln!(w, "{r}").map_err(err)?;
    }
    w.flush().map_err(err)
}

fn matrix_rows(m: &DMatrix<f64>) -> impl Iterator<Item = String> + '_ {
    (0..m.nrows()).map(move |i| {
        (0..m.ncols())
            .map(|j| fmt_f64(m[(i, j)]))
            .collect::<Vec<_>>()
            .join(",")
    })
}

/// `n` rows of `p` values, no header row.
pub fn write_data_csv(path: &Path, data: &DataMatrix, echo: &Value) -> Result<()> {
    write_lines(path, &header_line(echo), matrix_rows(data.matrix()))
}

/// Header row of node ids, then `p` rows of `p` values.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>, echo: &Value) -> Result<()> {
    let ids = (0..m.ncols())
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(",");
    write_lines(
        path,
        &header_line(echo),
        std::iter::once(ids).chain(matrix_rows(m)),
    )
}

fn read_rows(path: &Path, has_header: bool) -> Result<(Option<Vec<String>>, Vec<Vec<f64>>)> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .comment(Some(b'#'))
        .from_reader(file);
    let header = if has_header {
        Some(
            reader
                .headers()
                .map_err(|e| CliError::parse(path, e))?
                .iter()
                .map(str::to_string)
                .collect(),
        )
    } else {
        None
    };
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| CliError::parse(path, e))?;
        let row = rec
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| CliError::parse(path, format!("'{f}': {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn to_matrix(path: &Path, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(CliError::parse(
            path,
            "rows must be non-empty and of equal length",
        ));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn read_data_csv(path: &Path) -> Result<DataMatrix> {
    let (_, rows) = read_rows(path, false)?;
    Ok(DataMatrix::new(to_matrix(path, &rows)?)?)
}

pub fn read_matrix_csv(path: &Path) -> Result<PrecisionMatrix> {
    let (header, rows) = read_rows(path, true)?;
    let m = to_matrix(path, &rows)?;
    let p = header.map_or(0, |h| h.len());
    if m.nrows() != p || m.ncols() != p {
        return Err(CliError::parse(
            path,
            format!("expected {p} x {p} entries after the header"),
        ));
    }
    Ok(PrecisionMatrix::new(m)?)
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut w = create(path)?;
    let err = |e| CliError::io(path, e);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::io(path, e))?;
    writeln!(w).map_err(err)?;
    w.flush().map_err(err)
}

pub fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::parse(path, e))
}
