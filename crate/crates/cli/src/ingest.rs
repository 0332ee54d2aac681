//! CSV ingestion: outcome, covariate, and optional response-indicator
//! columns, with missing outcomes marked by empty cells or a literal "NA".

use std::io::{Read, Write};
use std::path::Path;

use krrimpute::Dataset;
use ndarray::{Array1, Array2};

use crate::CliError;

/// Column roles inside an input file.
pub struct CsvSchema {
    pub outcome: String,
    /// Empty means: every column other than the outcome (and the response
    /// indicator, when named) is a covariate, in file order.
    pub covariates: Vec<String>,
    /// When absent, the response indicator is inferred from outcome
    /// missingness.
    pub response: Option<String>,
}

#[derive(Debug)]
pub struct IngestResult {
    pub dataset: Dataset,
    pub covariate_names: Vec<String>,
    pub outcome_name: String,
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == "NA"
}

pub fn ingest_csv_path(path: &Path, schema: &CsvSchema) -> Result<IngestResult, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::input(format!("cannot open {}: {e}", path.display())))?;
    ingest_csv(file, schema)
}

pub fn ingest_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<IngestResult, CliError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::input(format!("cannot read CSV header: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let find = |name: &str| -> Result<usize, CliError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::input(format!("column '{name}' not found in header")))
    };
    let outcome_idx = find(&schema.outcome)?;
    let response_idx = match &schema.response {
        Some(name) => Some(find(name)?),
        None => None,
    };
    let covariate_idx: Vec<usize> = if schema.covariates.is_empty() {
        (0..headers.len())
            .filter(|&i| i != outcome_idx && Some(i) != response_idx)
            .collect()
    } else {
        schema
            .covariates
            .iter()
            .map(|name| find(name))
            .collect::<Result<Vec<_>, _>>()?
    };
    if covariate_idx.is_empty() {
        return Err(CliError::input("no covariate columns".into()));
    }

    let mut y_vals = Vec::new();
    let mut delta = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (row_number, record) in rdr.records().enumerate() {
        let data_row = row_number + 1; // 1-based data rows
        let record =
            record.map_err(|e| CliError::input(format!("row {data_row}: malformed CSV: {e}")))?;

        let get = |idx: usize| -> &str { record.get(idx).unwrap_or("").trim() };

        // covariates must be fully observed
        let mut xrow = Vec::with_capacity(covariate_idx.len());
        for &ci in &covariate_idx {
            let cell = get(ci);
            if is_missing(cell) {
                return Err(CliError::input(format!(
                    "missing covariate at row {data_row}, column '{}'; covariates must be fully observed",
                    headers[ci]
                )));
            }
            let v: f64 = cell.parse().map_err(|_| {
                CliError::input(format!(
                    "non-numeric covariate '{cell}' at row {data_row}, column '{}'",
                    headers[ci]
                ))
            })?;
            xrow.push(v);
        }

        let outcome_cell = get(outcome_idx);
        let responded = match response_idx {
            Some(ri) => {
                let cell = get(ri);
                match cell {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(CliError::input(format!(
                            "response indicator must be 0 or 1, got '{other}' at row {data_row}"
                        )))
                    }
                }
            }
            None => !is_missing(outcome_cell),
        };

        let y = if responded {
            if is_missing(outcome_cell) {
                return Err(CliError::input(format!(
                    "row {data_row} is marked as a respondent but the outcome is missing"
                )));
            }
            outcome_cell.parse().map_err(|_| {
                CliError::input(format!(
                    "non-numeric outcome '{outcome_cell}' at row {data_row}"
                ))
            })?
        } else if is_missing(outcome_cell) {
            f64::NAN
        } else {
            // indicator says missing but a value is present; parse and carry it
            outcome_cell.parse().unwrap_or(f64::NAN)
        };

        y_vals.push(y);
        delta.push(u8::from(responded));
        rows.push(xrow);
    }

    if rows.is_empty() {
        return Err(CliError::input("input file has no data rows".into()));
    }
    if delta.iter().all(|&d| d == 0) {
        return Err(CliError::input("every outcome is missing; nothing to fit".into()));
    }

    let d = covariate_idx.len();
    let mut x = Array2::zeros((rows.len(), d));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            x[[i, j]] = v;
        }
    }
    let dataset = Dataset::new(x, Array1::from(y_vals), delta)
        .map_err(|e| CliError::input(e.to_string()))?;
    Ok(IngestResult {
        dataset,
        covariate_names: covariate_idx.iter().map(|&i| headers[i].clone()).collect(),
        outcome_name: headers[outcome_idx].clone(),
    })
}

/// Write a dataset back to CSV with an explicit response-indicator column.
/// Respondent outcomes render with shortest-round-trip formatting, so a
/// write/ingest cycle reproduces the dataset exactly.
pub fn write_csv<W: Write>(
    dataset: &Dataset,
    covariate_names: &[String],
    outcome_name: &str,
    mut out: W,
) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError::input(format!("write failed: {e}"));
    write!(out, "{outcome_name},response").map_err(io_err)?;
    for name in covariate_names {
        write!(out, ",{name}").map_err(io_err)?;
    }
    writeln!(out).map_err(io_err)?;
    for i in 0..dataset.n() {
        if dataset.response.is_respondent(i) {
            write!(out, "{},1", dataset.y[i]).map_err(io_err)?;
        } else {
            write!(out, "NA,0").map_err(io_err)?;
        }
        for j in 0..dataset.dim() {
            write!(out, ",{}", dataset.x[[i, j]]).map_err(io_err)?;
        }
        writeln!(out).map_err(io_err)?;
    }
    Ok(())
}
