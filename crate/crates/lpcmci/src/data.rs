//! Observed time series: `T` rows by `N` columns, with CSV input and output.

use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("csv error: {0}")]
    Csv(String),
    #[error("io error on {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("row {row}, column {col} ({name}): cannot parse {value:?} as a number")]
    Parse { row: usize, col: usize, name: String, value: String },
    #[error("row {row}, column {col} ({name}): missing or NaN value")]
    Missing { row: usize, col: usize, name: String },
    #[error("row {row}: expected {expected} fields, found {found}")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("column {col} ({name}) is constant")]
    Constant { col: usize, name: String },
    #[error("data has no rows or no columns")]
    Empty,
}

/// Row-major `T x N` matrix with column names.
#[derive(Clone, Debug, PartialEq)]
pub struct DataFrame {
    names: Vec<String>,
    n_rows: usize,
    values: Vec<f64>,
}

impl DataFrame {
    /// Columns named `X0..X{N-1}`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, DataError> {
        let n = rows.first().map(|r| r.len()).unwrap_or(0);
        Self::with_names((0..n).map(|k| format!("X{k}")).collect(), rows)
    }

    pub fn with_names(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self, DataError> {
        let mut values = Vec::with_capacity(rows.len() * names.len());
        for (r, row) in rows.iter().enumerate() {
            if row.len() != names.len() {
                return Err(DataError::Ragged { row: r + 1, expected: names.len(), found: row.len() });
            }
            values.extend_from_slice(row);
        }
        Ok(DataFrame { names, n_rows: rows.len(), values })
    }

    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self, DataError> {
        let t = cols.first().map(|c| c.len()).unwrap_or(0);
        let rows: Vec<Vec<f64>> = (0..t).map(|r| cols.iter().map(|c| c[r]).collect()).collect();
        let mut df = Self::from_rows(&rows)?;
        if rows.is_empty() {
            df.names = (0..cols.len()).map(|k| format!("X{k}")).collect();
        }
        Ok(df)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.names.len() + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.get(r, col)).collect()
    }

    /// Same data with columns moved so that old column `k` becomes `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> DataFrame {
        let n = self.n_cols();
        let mut names = vec![String::new(); n];
        let mut values = vec![0.0; self.values.len()];
        for k in 0..n {
            names[perm[k]] = self.names[k].clone();
            for r in 0..self.n_rows {
                values[r * n + perm[k]] = self.values[r * n + k];
            }
        }
        DataFrame { names, n_rows: self.n_rows, values }
    }

    /// Reject NaN cells and constant columns.
    pub fn validate(&self) -> Result<(), DataError> {
        if self.n_rows == 0 || self.names.is_empty() {
            return Err(DataError::Empty);
        }
        for c in 0..self.n_cols() {
            let first = self.get(0, c);
            let mut constant = true;
            for r in 0..self.n_rows {
                let v = self.get(r, c);
                if !v.is_finite() {
                    return Err(DataError::Missing { row: r + 1, col: c, name: self.names[c].clone() });
                }
                constant &= v == first;
            }
            if constant {
                return Err(DataError::Constant { col: c, name: self.names[c].clone() });
            }
        }
        Ok(())
    }

    /// Parse CSV with a header row. Row numbers in errors count data rows from 1.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
        let names: Vec<String> = rdr
            .headers()
            .map_err(|e| DataError::Csv(e.to_string()))?
            .iter()
            .map(|s| s.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| DataError::Csv(e.to_string()))?;
            if rec.len() != names.len() {
                return Err(DataError::Ragged { row: r + 1, expected: names.len(), found: rec.len() });
            }
            let mut row = Vec::with_capacity(names.len());
            for (c, field) in rec.iter().enumerate() {
                let field = field.trim();
                if field.is_empty() {
                    return Err(DataError::Missing { row: r + 1, col: c, name: names[c].clone() });
                }
                let v: f64 = field.parse().map_err(|_| DataError::Parse {
                    row: r + 1,
                    col: c,
                    name: names[c].clone(),
                    value: field.to_string(),
                })?;
                if v.is_nan() {
                    return Err(DataError::Missing { row: r + 1, col: c, name: names[c].clone() });
                }
                row.push(v);
            }
            rows.push(row);
        }
        Self::with_names(names, &rows)
    }

    pub fn read_csv_path(path: &Path) -> Result<Self, DataError> {
        let f = std::fs::File::open(path).map_err(|e| DataError::Io { path: path.display().to_string(), msg: e.to_string() })?;
        Self::read_csv(f)
    }

    /// Write CSV; integral columns are written without a decimal point when `integers` is set.
    pub fn write_csv<W: Write>(&self, writer: W, integers: bool) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.names).map_err(|e| DataError::Csv(e.to_string()))?;
        for r in 0..self.n_rows {
            let rec: Vec<String> = (0..self.n_cols())
                .map(|c| {
                    let v = self.get(r, c);
                    if integers {
                        format!("{}", v.round() as i64)
                    } else {
                        format!("{v}")
                    }
                })
                .collect();
            w.write_record(&rec).map_err(|e| DataError::Csv(e.to_string()))?;
        }
        w.flush().map_err(|e| DataError::Csv(e.to_string()))
    }

    pub fn write_csv_path(&self, path: &Path, integers: bool) -> Result<(), DataError> {
        let f = std::fs::File::create(path).map_err(|e| DataError::Io { path: path.display().to_string(), msg: e.to_string() })?;
        self.write_csv(f, integers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let df = DataFrame::from_rows(&[vec![1.5, -2.0], vec![0.25, 3.0]]).unwrap();
        let mut buf = Vec::new();
        df.write_csv(&mut buf, false).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("X0,X1\n"));
        let back = DataFrame::read_csv(&buf[..]).unwrap();
        assert_eq!(back, df);
    }

    #[test]
    fn errors_name_row_and_column() {
        let err = DataFrame::read_csv("a,b\n1,2\n3,\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::Missing { row: 2, col: 1, .. }), "{err}");
        let err = DataFrame::read_csv("a,b\n1,x\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("row 1, column 1 (b)"), "{err}");
        let err = DataFrame::read_csv("a,b\n1,NaN\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::Missing { row: 1, col: 1, .. }));
        let df = DataFrame::read_csv("a,b\n1,2\n1,3\n".as_bytes()).unwrap();
        assert!(matches!(df.validate(), Err(DataError::Constant { col: 0, .. })));
        let err = DataFrame::read_csv("a,b\n1,2,3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::Ragged { row: 1, .. }));
    }

    #[test]
    fn permutation_moves_columns() {
        let df = DataFrame::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let p = df.permuted(&[2, 0, 1]);
        assert_eq!(p.column(2), vec![1.0]);
        assert_eq!(p.column(0), vec![2.0]);
        assert_eq!(p.names()[2], "X0");
    }
}
