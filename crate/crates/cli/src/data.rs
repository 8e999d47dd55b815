//! CSV input and output. Floats are written in shortest round-trip form.

use std::io::Write;
use std::path::Path;

use antitonic::{Error, RegressionData};
use nalgebra::DMatrix;

use crate::error::CliError;

/// A data file: covariate names, covariate rows and the response.
pub struct Table {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl Table {
    /// Design matrix with a trailing intercept column unless `intercept` is false.
    pub fn regression(&self, intercept: bool) -> Result<(RegressionData, Vec<String>), CliError> {
        let p = self.names.len();
        let d = p + usize::from(intercept);
        let n = self.rows.len();
        let x = DMatrix::from_fn(n, d, |i, j| if j < p { self.rows[i][j] } else { 1.0 });
        let mut terms = self.names.clone();
        if intercept {
            terms.push("(Intercept)".into());
        }
        match RegressionData::new(x, self.y.clone()) {
            Ok(data) => Ok((data, terms)),
            Err(Error::RankDeficient { column }) => Err(CliError::Data(format!(
                "design is rank deficient at column '{}'",
                terms[column]
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

/// Reads a CSV with a header row. The response is the column named `y`, or
/// the last column if none is.
pub fn read_table(path: &Path) -> Result<Table, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.len() < 2 {
        return Err(CliError::Data(format!(
            "{}: need at least one covariate and a response",
            path.display()
        )));
    }
    let yi = header.iter().position(|h| h == "y").unwrap_or(header.len() - 1);
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != yi)
        .map(|(_, h)| h.clone())
        .collect();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let mut row = Vec::with_capacity(names.len());
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                CliError::Data(format!(
                    "line {line}, column '{}': cannot parse '{field}' as a number",
                    header[j]
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::Data(format!(
                    "line {line}, column '{}': value is not finite",
                    header[j]
                )));
            }
            if j == yi {
                y.push(v);
            } else {
                row.push(v);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    Ok(Table { names, rows, y })
}

/// Writes `rows` under `header` to `out`.
pub fn write_csv<W: Write>(out: W, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest decimal string that parses back to the same `f64`.
pub fn float(v: f64) -> String {
    format!("{v:?}")
}
