//! CSV export/import for matrices and curves.
//!
//! Matrix CSVs have a header row of column labels with an empty first
//! cell, and one labelled row per matrix row. Floats carry 17 significant
//! digits for a lossless round trip.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{PoetError, Result};

/// Writes a labelled matrix CSV.
pub fn write_matrix_csv(
    path: &Path,
    m: &DMatrix<f64>,
    row_labels: &[String],
    col_labels: &[String],
) -> Result<()> {
    if row_labels.len() != m.nrows() || col_labels.len() != m.ncols() {
        return Err(PoetError::DimensionMismatch {
            expected: format!("{} row and {} column labels", m.nrows(), m.ncols()),
            actual: format!("{} and {}", row_labels.len(), col_labels.len()),
        });
    }
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for label in col_labels {
        write!(file, ",{label}")?;
    }
    writeln!(file)?;
    for i in 0..m.nrows() {
        write!(file, "{}", row_labels[i])?;
        for j in 0..m.ncols() {
            write!(file, ",{:.16e}", m[(i, j)])?;
        }
        writeln!(file)?;
    }
    Ok(())
}

/// Reads a labelled matrix CSV written by [`write_matrix_csv`].
pub fn read_matrix_csv(path: &Path) -> Result<(DMatrix<f64>, Vec<String>, Vec<String>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    for record in reader.records() {
        rows.push(record?.iter().map(|s| s.to_string()).collect());
    }
    if rows.is_empty() {
        return Err(PoetError::Parse {
            row: 0,
            col: 0,
            message: "empty matrix file".into(),
        });
    }
    let col_labels: Vec<String> = rows[0][1..].iter().map(|s| s.to_string()).collect();
    let ncols = col_labels.len();
    let nrows = rows.len() - 1;
    let mut row_labels = Vec::with_capacity(nrows);
    let mut m = DMatrix::zeros(nrows, ncols);
    for (r, row) in rows.iter().enumerate().skip(1) {
        if row.len() != ncols + 1 {
            return Err(PoetError::Parse {
                row: r,
                col: row.len(),
                message: format!("expected {} cells", ncols + 1),
            });
        }
        row_labels.push(row[0].clone());
        for (j, cell) in row[1..].iter().enumerate() {
            m[(r - 1, j)] = cell.trim().parse().map_err(|_| PoetError::Parse {
                row: r,
                col: j + 1,
                message: format!("non-numeric cell '{cell}'"),
            })?;
        }
    }
    Ok((m, row_labels, col_labels))
}

/// Writes a generic records CSV: a header line and rows of stringified
/// fields.
pub fn write_records_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "{}", header.join(","))?;
    for row in rows {
        writeln!(file, "{}", row.join(","))?;
    }
    Ok(())
}

/// Formats a float with 17 significant digits (round-trip exact).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
