//! CSV input: a header row, then one observation per line.

use std::path::Path;

use fic_core::Dataset;

use crate::error::{CliError, Result};

/// Which columns to pull out of the file.
#[derive(Debug, Clone)]
pub struct Columns {
    pub response: String,
    /// Empty means every column other than the response and id, in header order.
    pub covariates: Vec<String>,
    pub id_column: Option<String>,
}

pub fn ingest(path: &Path, columns: &Columns) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    ingest_str(&text, columns)
}

pub fn ingest_str(text: &str, columns: &Columns) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Data(format!("bad header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.iter().all(|h| h.is_empty()) {
        return Err(CliError::Data("no data rows".into()));
    }
    for (i, h) in header.iter().enumerate() {
        if header[..i].contains(h) {
            return Err(CliError::Data(format!("duplicate header {h:?}")));
        }
    }
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Data(format!("missing column {name:?}")))
    };
    let y_col = find(&columns.response)?;
    let id_col = columns.id_column.as_deref().map(find).transpose()?;
    let x_names: Vec<String> = if columns.covariates.is_empty() {
        header
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != y_col && Some(i) != id_col)
            .map(|(_, h)| h.clone())
            .collect()
    } else {
        columns.covariates.clone()
    };
    let x_cols = x_names.iter().map(|n| find(n)).collect::<Result<Vec<_>>>()?;

    let mut response = Vec::new();
    let mut xs: Vec<Vec<f64>> = vec![Vec::new(); x_cols.len()];
    let mut ids = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| CliError::Data(format!("row {row}: {e}")))?;
        if record.len() != header.len() {
            return Err(CliError::Data(format!(
                "row {row} has {} cells, header has {}",
                record.len(),
                header.len()
            )));
        }
        let cell = |j: usize| -> Result<f64> {
            let s = &record[j];
            if s.is_empty() {
                return Err(CliError::Data(format!("row {row} column {:?} is blank", header[j])));
            }
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    CliError::Data(format!("row {row} column {:?}: not a number: {s:?}", header[j]))
                })
        };
        response.push(cell(y_col)?);
        for (k, &j) in x_cols.iter().enumerate() {
            xs[k].push(cell(j)?);
        }
        if let Some(j) = id_col {
            if record[j].is_empty() {
                return Err(CliError::Data(format!("row {row} column {:?} is blank", header[j])));
            }
            ids.push(record[j].to_string());
        }
    }
    if response.is_empty() {
        return Err(CliError::Data("no data rows".into()));
    }
    if let Some(dup) = ids.iter().enumerate().find(|(i, id)| ids[..*i].contains(id)) {
        return Err(CliError::Data(format!("duplicate row id {:?}", dup.1)));
    }
    Dataset::new(response, x_names, xs, id_col.map(|_| ids))
        .map_err(|e| CliError::Data(e.to_string()))
}
