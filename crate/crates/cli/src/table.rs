//! Numeric CSV tables with a header row.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use spin_core::{Point2D, SpatialDataset};

use crate::error::{CliError, CliResult};

pub const X_COLUMN: &str = "x";
pub const Y_COLUMN: &str = "y";

/// Column-major numeric table.
#[derive(Debug, Clone)]
pub struct Table {
    pub headers: Vec<String>,
    columns: Vec<Vec<f64>>,
    source: String,
}

impl Table {
    pub fn read(path: &Path) -> CliResult<Table> {
        let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
        Self::from_reader(file, &path.display().to_string())
    }

    pub fn from_reader(reader: impl std::io::Read, source: &str) -> CliResult<Table> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| CliError::Data(format!("{source}: {e}")))?
            .iter()
            .map(str::to_string)
            .collect();
        if headers.is_empty() || headers.iter().all(String::is_empty) {
            return Err(CliError::Data(format!("{source}: missing header row")));
        }
        for (i, h) in headers.iter().enumerate() {
            if headers[..i].contains(h) {
                return Err(CliError::Data(format!("{source}: duplicate column `{h}`")));
            }
        }
        let mut columns = vec![Vec::new(); headers.len()];
        for record in rdr.records() {
            let record = record.map_err(|e| CliError::Data(format!("{source}: {e}")))?;
            let line = record.position().map_or(0, |p| p.line());
            for (c, field) in record.iter().enumerate() {
                let value: f64 = field.parse().map_err(|_| {
                    CliError::Data(format!(
                        "{source}: line {line}, column `{}`: cannot parse `{field}` as a number",
                        headers[c]
                    ))
                })?;
                if !value.is_finite() {
                    return Err(CliError::Data(format!(
                        "{source}: line {line}, column `{}`: non-finite value",
                        headers[c]
                    )));
                }
                columns[c].push(value);
            }
        }
        Ok(Table {
            headers,
            columns,
            source: source.to_string(),
        })
    }

    pub fn nrows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> CliResult<&[f64]> {
        self.headers
            .iter()
            .position(|h| h == name)
            .map(|c| self.columns[c].as_slice())
            .ok_or_else(|| CliError::Data(format!("{}: missing column `{name}`", self.source)))
    }

    pub fn points(&self) -> CliResult<Vec<Point2D>> {
        let xs = self.column(X_COLUMN)?;
        let ys = self.column(Y_COLUMN)?;
        Ok(xs
            .iter()
            .zip(ys)
            .map(|(&a, &b)| Point2D::new(a, b))
            .collect())
    }

    /// Rows of the named columns, in the order given.
    pub fn matrix(&self, names: &[String]) -> CliResult<DMatrix<f64>> {
        let cols = names
            .iter()
            .map(|n| self.column(n))
            .collect::<CliResult<Vec<_>>>()?;
        Ok(DMatrix::from_fn(self.nrows(), names.len(), |i, j| {
            cols[j][i]
        }))
    }

    /// Every column except the coordinates and `exclude`.
    pub fn other_columns(&self, exclude: &str) -> Vec<String> {
        self.headers
            .iter()
            .filter(|h| *h != X_COLUMN && *h != Y_COLUMN && *h != exclude)
            .cloned()
            .collect()
    }

    /// Observations with an intercept prepended to the named covariates.
    pub fn dataset(&self, response: &str, covariates: &[String]) -> CliResult<SpatialDataset> {
        if self.nrows() == 0 {
            return Err(CliError::Data(format!("{}: no data rows", self.source)));
        }
        if covariates.iter().any(|c| c == response) {
            return Err(CliError::Usage(format!(
                "response `{response}` is also listed as a covariate"
            )));
        }
        let points = self.points()?;
        let y = DVector::from_column_slice(self.column(response)?);
        let cov = self.matrix(covariates)?;
        Ok(SpatialDataset::with_intercept(points, y, &cov, covariates)?)
    }

    /// Sites with the design row `(1, covariates...)`.
    pub fn sites(&self, covariates: &[String]) -> CliResult<(Vec<Point2D>, DMatrix<f64>)> {
        if self.nrows() == 0 {
            return Err(CliError::Data(format!("{}: no data rows", self.source)));
        }
        let points = self.points()?;
        let x = spin_core::estimate::design_with_intercept(&self.matrix(covariates)?);
        Ok((points, x))
    }
}

/// Writes a header and rows of numbers; floats use the shortest text that
/// reads back to the same value, switching to exponent form when tiny or huge.
pub fn write_csv(out: impl Write, headers: &[&str], rows: &[Vec<f64>]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    let data_err = |e: csv::Error| CliError::Data(format!("writing CSV: {e}"));
    w.write_record(headers).map_err(data_err)?;
    for row in rows {
        w.write_record(row.iter().map(|v| format!("{v:?}")))
            .map_err(data_err)?;
    }
    w.flush()
        .map_err(|e| CliError::Data(format!("writing CSV: {e}")))
}

/// Opens `path` for writing, or stdout when absent.
pub fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    match path {
        Some(p) => {
            let f = std::fs::File::create(p).map_err(|e| CliError::io(p, e))?;
            Ok(Box::new(std::io::BufWriter::new(f)))
        }
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}
