//! File input and output: numeric CSV matrices in, CSV tables out.
//!
//! The input format is deliberately small: UTF-8, comma-separated, decimal
//! point, one observation per line. The first line may be a header; it is
//! detected by its first token failing to parse as a number and is then
//! skipped. Every retained line must contain the same number of fields and
//! every field must be a finite number — missing values are not supported.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::CliError;

/// Reads a numeric CSV file into an n x p matrix (rows = observations).
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    parse_matrix(&text).map_err(|msg| CliError::Usage(format!("{}: {msg}", path.display())))
}

/// Parses CSV text into a matrix; see the module docs for the format.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>, String> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (index, record) in reader.records().enumerate() {
        let line = index + 1;
        let record = record.map_err(|e| format!("line {line}: {e}"))?;
        if index == 0 && looks_like_header(&record) {
            continue;
        }
        let mut row = Vec::with_capacity(record.len());
        for (col, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| {
                format!("line {line}, field {}: expected a number, got {field:?}", col + 1)
            })?;
            if !value.is_finite() {
                return Err(format!("line {line}, field {}: non-finite value {field:?}", col + 1));
            }
            row.push(value);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(format!(
                    "line {line}: expected {} fields, found {}",
                    first.len(),
                    row.len()
                ));
            }
        }
        rows.push(row);
    }

    let n = rows.len();
    if n == 0 {
        return Err("no data rows".to_string());
    }
    let p = rows[0].len();
    Ok(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
}

/// A line is treated as a header exactly when its first field does not parse
/// as a number.
fn looks_like_header(record: &csv::StringRecord) -> bool {
    match record.get(0) {
        Some(first) => first.parse::<f64>().is_err(),
        None => false,
    }
}

/// Writes bytes to `path`, or to stdout when no path is given.
pub fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(path) => fs::write(path, bytes)
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display()))),
        None => std::io::stdout()
            .lock()
            .write_all(bytes)
            .map_err(|e| CliError::Usage(format!("cannot write to stdout: {e}"))),
    }
}

/// Serializes one table of records to CSV bytes (header from field names).
pub fn to_csv_bytes<T: serde::Serialize>(records: &[T]) -> Result<Vec<u8>, CliError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for record in records {
        writer
            .serialize(record)
            .map_err(|e| CliError::Usage(format!("cannot serialize record: {e}")))?;
    }
    writer
        .into_inner()
        .map_err(|e| CliError::Usage(format!("cannot flush CSV output: {e}")))
}
