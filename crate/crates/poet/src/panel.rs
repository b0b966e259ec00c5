//! Return panels: a `p x T` matrix of observations with asset and time
//! labels, CSV ingestion, demeaning and the sample covariance.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{PoetError, Result};
use crate::linalg::SymMatrix;

/// Layout of a panel CSV on disk.
///
/// The canonical file is `AssetsAsColumns`: a header row of asset ids and
/// one row per time point. If the first header cell is empty or one of
/// `t`, `time`, `timestamp`, `date` (case-insensitive), the first column
/// holds time labels; otherwise every column is an asset and time labels
/// are generated as `0..T`. `AssetsAsRows` is the transpose: one row per
/// asset, the first cell of each row being the asset id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    AssetsAsColumns,
    AssetsAsRows,
}

fn is_time_marker(cell: &str) -> bool {
    let c = cell.trim().to_ascii_lowercase();
    c.is_empty() || c == "t" || c == "time" || c == "timestamp" || c == "date"
}

/// Observed excess-return panel `Y` with `p` assets over `T` periods.
/// Row `i` of `values` is the time series of asset `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    asset_ids: Vec<String>,
    timestamps: Vec<String>,
    values: DMatrix<f64>,
}

impl ReturnPanel {
    /// Builds a panel from parts, validating shape and finiteness.
    pub fn new(
        asset_ids: Vec<String>,
        timestamps: Vec<String>,
        values: DMatrix<f64>,
    ) -> Result<Self> {
        let (p, t) = (values.nrows(), values.ncols());
        if p < 1 || t < 2 {
            return Err(PoetError::InvalidParameter(format!(
                "panel must have p >= 1 and T >= 2, got p = {p}, T = {t}"
            )));
        }
        if asset_ids.len() != p || timestamps.len() != t {
            return Err(PoetError::DimensionMismatch {
                expected: format!("{p} asset ids and {t} timestamps"),
                actual: format!("{} and {}", asset_ids.len(), timestamps.len()),
            });
        }
        for j in 0..t {
            for i in 0..p {
                if !values[(i, j)].is_finite() {
                    return Err(PoetError::NonFinite {
                        row: i,
                        col: j,
                        context: format!("panel value for asset '{}'", asset_ids[i]),
                    });
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        for id in &asset_ids {
            if !seen.insert(id.as_str()) {
                return Err(PoetError::InvalidParameter(format!(
                    "duplicate asset id '{id}'"
                )));
            }
        }
        Ok(Self {
            asset_ids,
            timestamps,
            values,
        })
    }

    /// Panel with generated labels, for synthetic data.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let ids = (0..values.nrows()).map(|i| format!("a{i}")).collect();
        let ts = (0..values.ncols()).map(|t| t.to_string()).collect();
        Self::new(ids, ts, values)
    }

    pub fn num_assets(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_periods(&self) -> usize {
        self.values.ncols()
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn timestamps(&self) -> &[String] {
        &self.timestamps
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Sub-panel over a contiguous range of time indices.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.num_periods() {
            return Err(PoetError::InvalidParameter(format!(
                "window [{start}, {}) exceeds panel length {}",
                start + len,
                self.num_periods()
            )));
        }
        Self::new(
            self.asset_ids.clone(),
            self.timestamps[start..start + len].to_vec(),
            self.values.columns(start, len).into_owned(),
        )
    }

    /// True when every row mean is at most `tol` in magnitude.
    pub fn is_demeaned(&self, tol: f64) -> bool {
        let t = self.num_periods() as f64;
        (0..self.num_assets()).all(|i| (self.values.row(i).sum() / t).abs() <= tol)
    }

    /// Removes the time mean from each asset's series. Idempotent. A second
    /// correction pass keeps the residual means at the rounding floor.
    pub fn demean(&self) -> Self {
        let mut values = self.values.clone();
        let t = values.ncols() as f64;
        for _ in 0..2 {
            for i in 0..values.nrows() {
                let mean = values.row(i).sum() / t;
                for j in 0..values.ncols() {
                    values[(i, j)] -= mean;
                }
            }
        }
        Self {
            asset_ids: self.asset_ids.clone(),
            timestamps: self.timestamps.clone(),
            values,
        }
    }

    /// Loads a panel from CSV. See [`Orientation`] for the layout rules.
    pub fn load_csv(path: &Path, orientation: Orientation) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_path(path)?;
        let mut rows: Vec<Vec<String>> = Vec::new();
        for record in reader.records() {
            let record = record?;
            rows.push(record.iter().map(|s| s.to_string()).collect());
        }
        if rows.len() < 2 {
            return Err(PoetError::Parse {
                row: 0,
                col: 0,
                message: "need a header row and at least one data row".into(),
            });
        }
        let width = rows[0].len();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(PoetError::Parse {
                    row: r,
                    col: row.len(),
                    message: format!("ragged row: expected {width} cells, got {}", row.len()),
                });
            }
        }

        let parse_cell = |r: usize, c: usize, cell: &str| -> Result<f64> {
            let v: f64 = cell.trim().parse().map_err(|_| PoetError::Parse {
                row: r,
                col: c,
                message: format!("non-numeric cell '{cell}'"),
            })?;
            if !v.is_finite() {
                return Err(PoetError::Parse {
                    row: r,
                    col: c,
                    message: format!("non-finite cell '{cell}'"),
                });
            }
            Ok(v)
        };

        match orientation {
            Orientation::AssetsAsColumns => {
                let has_time_col = is_time_marker(&rows[0][0]);
                let first_data_col = if has_time_col { 1 } else { 0 };
                let p = width - first_data_col;
                let t = rows.len() - 1;
                if p == 0 {
                    return Err(PoetError::Parse {
                        row: 0,
                        col: 0,
                        message: "no asset columns".into(),
                    });
                }
                let asset_ids: Vec<String> = rows[0][first_data_col..]
                    .iter()
                    .map(|s| s.trim().to_string())
                    .collect();
                let mut timestamps = Vec::with_capacity(t);
                let mut values = DMatrix::zeros(p, t);
                for (r, row) in rows.iter().enumerate().skip(1) {
                    let j = r - 1;
                    timestamps.push(if has_time_col {
                        row[0].trim().to_string()
                    } else {
                        j.to_string()
                    });
                    for (i, cell) in row[first_data_col..].iter().enumerate() {
                        values[(i, j)] = parse_cell(r, i + first_data_col, cell)?;
                    }
                }
                Self::new(asset_ids, timestamps, values)
            }
            Orientation::AssetsAsRows => {
                let timestamps: Vec<String> = rows[0][1..]
                    .iter()
                    .map(|s| s.trim().to_string())
                    .collect();
                let t = width - 1;
                let p = rows.len() - 1;
                let mut asset_ids = Vec::with_capacity(p);
                let mut values = DMatrix::zeros(p, t);
                for (r, row) in rows.iter().enumerate().skip(1) {
                    let i = r - 1;
                    asset_ids.push(row[0].trim().to_string());
                    for (j, cell) in row[1..].iter().enumerate() {
                        values[(i, j)] = parse_cell(r, j + 1, cell)?;
                    }
                }
                Self::new(asset_ids, timestamps, values)
            }
        }
    }

    /// Writes the canonical assets-as-columns CSV with a `timestamp` first
    /// column. Floats carry 17 significant digits so a round trip is
    /// value-exact.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(file, "timestamp")?;
        for id in &self.asset_ids {
            write!(file, ",{id}")?;
        }
        writeln!(file)?;
        for j in 0..self.num_periods() {
            write!(file, "{}", self.timestamps[j])?;
            for i in 0..self.num_assets() {
                write!(file, ",{:.16e}", self.values[(i, j)])?;
            }
            writeln!(file)?;
        }
        Ok(())
    }
}

/// Sample covariance `T^{-1} Y Y'` of a demeaned panel.
///
/// The divisor is `T`, not `T - 1`; the exact equivalence between the
/// spectral and the least-squares estimator routes depends on it. A
/// non-demeaned input produces a warning, not an error.
pub fn sample_covariance(panel: &ReturnPanel) -> SymMatrix {
    if !panel.is_demeaned(1e-8) {
        log::warn!("sample_covariance: panel rows are not mean zero; demean() first");
    }
    let t = panel.num_periods() as f64;
    let y = panel.values();
    SymMatrix::from_matrix((y * y.transpose()) / t).expect("panel entries are finite")
}
