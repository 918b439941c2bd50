use crate::error::{FicError, Result};

/// Response vector plus named covariate columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    response: Vec<f64>,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    row_ids: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(
        response: Vec<f64>,
        names: Vec<String>,
        columns: Vec<Vec<f64>>,
        row_ids: Option<Vec<String>>,
    ) -> Result<Self> {
        let n = response.len();
        if n < 2 {
            return Err(FicError::InvalidInput(format!(
                "dataset needs at least 2 rows, got {n}"
            )));
        }
        if names.len() != columns.len() {
            return Err(FicError::InvalidInput(
                "number of names and columns differ".into(),
            ));
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(FicError::InvalidInput(format!(
                    "duplicate column name {name:?}"
                )));
            }
        }
        for (name, col) in names.iter().zip(&columns) {
            if col.len() != n {
                return Err(FicError::InvalidInput(format!(
                    "column {name:?} has {} values, response has {n}",
                    col.len()
                )));
            }
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(FicError::InvalidInput(format!(
                    "column {name:?} has a missing or non-finite value at row {}",
                    row + 1
                )));
            }
        }
        if let Some(row) = response.iter().position(|v| !v.is_finite()) {
            return Err(FicError::InvalidInput(format!(
                "response has a missing or non-finite value at row {}",
                row + 1
            )));
        }
        if let Some(ids) = &row_ids {
            if ids.len() != n {
                return Err(FicError::InvalidInput("row id count differs from n".into()));
            }
        }
        Ok(Self {
            response,
            names,
            columns,
            row_ids,
        })
    }

    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn column_by_name(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|j| self.columns[j].as_slice())
    }

    pub fn covariate_count(&self) -> usize {
        self.columns.len()
    }

    /// Covariate values of one row, in column order.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// Row labels; 1-based row numbers when none were supplied.
    pub fn row_label(&self, i: usize) -> String {
        match &self.row_ids {
            Some(ids) => ids[i].clone(),
            None => (i + 1).to_string(),
        }
    }

    pub fn row_index(&self, label: &str) -> Option<usize> {
        (0..self.n()).find(|&i| self.row_label(i) == label)
    }

    /// Same data with rows reordered; `perm[k]` is the source row of new row `k`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.n());
        Self {
            response: perm.iter().map(|&i| self.response[i]).collect(),
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| perm.iter().map(|&i| c[i]).collect())
                .collect(),
            row_ids: Some(perm.iter().map(|&i| self.row_label(i)).collect()),
        }
    }

    /// Parses simple comma-separated text whose first column is the response.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| FicError::InvalidInput("empty data".into()))?
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        if header.len() < 2 {
            return Err(FicError::InvalidInput("need a response and covariates".into()));
        }
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
        for (r, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != header.len() {
                return Err(FicError::InvalidInput(format!(
                    "row {} has {} cells, expected {}",
                    r + 1,
                    cells.len(),
                    header.len()
                )));
            }
            for (j, cell) in cells.iter().enumerate() {
                let v: f64 = cell.trim().parse().map_err(|_| {
                    FicError::InvalidInput(format!(
                        "row {} column {:?}: cannot parse {:?}",
                        r + 1,
                        header[j],
                        cell
                    ))
                })?;
                cols[j].push(v);
            }
        }
        let response = cols.remove(0);
        Dataset::new(response, header[1..].to_vec(), cols, None)
    }
}

/// The vegetation-island bird counts: 14 islands, response `y`, covariates
/// `x1` (area), `x2` (elevation), `x3` (distance to Ecuador), `x4` (distance
/// to nearest island). Row 1 is Chiles.
pub fn bird_species() -> Dataset {
    Dataset::from_csv_str(include_str!("../data/birds.csv")).expect("bundled bird data parses")
}
