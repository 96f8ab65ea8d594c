//! CSV and file helpers shared by datasets, logs and reports.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let name = path.file_name().ok_or_else(|| Error::Parameter(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Matrix as CSV: one header row, then one line per matrix row.
pub fn matrix_to_csv(header: &[String], m: &Matrix) -> Result<Vec<u8>> {
    if header.len() != m.cols() {
        return Err(Error::Parameter(format!("{} header fields for {} columns", header.len(), m.cols())));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for i in 0..m.rows() {
        w.write_record(m.row(i).iter().map(|v| format!("{v:?}")))?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn write_matrix_csv(path: &Path, header: &[String], m: &Matrix) -> Result<()> {
    write_atomic(path, &matrix_to_csv(header, m)?)
}

pub fn read_matrix_csv(path: &Path) -> Result<(Vec<String>, Matrix)> {
    parse_matrix_csv(&fs::read(path)?)
}

pub fn parse_matrix_csv(bytes: &[u8]) -> Result<(Vec<String>, Matrix)> {
    let mut r = csv::Reader::from_reader(bytes);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Format(format!("bad number `{s}`: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let m = if rows.is_empty() { Matrix::zeros(0, header.len()) } else { Matrix::from_rows(&rows)? };
    if m.cols() != header.len() {
        return Err(Error::Format(format!("{} header fields but {} columns", header.len(), m.cols())));
    }
    Ok((header, m))
}

/// Arbitrary rows of string cells.
pub fn write_records_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}
