//! Weighted binary-outcome records with numeric characteristic columns.
//!
//! CSV layout: a header row, an `outcome` column (1 = good, 0 = bad), an
//! optional `weight` column (default 1.0) and any number of numeric columns.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const OUTCOME_COLUMN: &str = "outcome";
pub const WEIGHT_COLUMN: &str = "weight";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing column '{0}'")]
    MissingColumn(String),
    #[error("duplicate column '{0}'")]
    DuplicateColumn(String),
    #[error("row {row}, column '{column}': cannot parse '{value}' as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: outcome must be 0 or 1, got '{value}'")]
    InvalidOutcome { row: usize, value: String },
    #[error("row {row}: weight must be finite and >= 0, got {value}")]
    InvalidWeight { row: usize, value: f64 },
    #[error("row {row} has {got} fields, expected {expected}")]
    RowLength { row: usize, expected: usize, got: usize },
    #[error("validation fraction must lie in (0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("dataset has {rows} rows, above the configured cap of {cap}")]
    TooManyRows { rows: usize, cap: usize },
    #[error("column '{name}' has {got} values, expected {expected}")]
    ColumnLength {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    good: Vec<bool>,
    weight: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset from named columns. `good[i]` is the outcome of row `i`.
    pub fn new(
        columns: Vec<(String, Vec<f64>)>,
        good: Vec<bool>,
        weight: Option<Vec<f64>>,
    ) -> Result<Self, DataError> {
        let n = good.len();
        let weight = weight.unwrap_or_else(|| vec![1.0; n]);
        if weight.len() != n {
            return Err(DataError::ColumnLength {
                name: WEIGHT_COLUMN.into(),
                expected: n,
                got: weight.len(),
            });
        }
        if let Some((row, &value)) = weight.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w >= 0.0)) {
            return Err(DataError::InvalidWeight { row, value });
        }
        let mut names = Vec::with_capacity(columns.len());
        let mut values = Vec::with_capacity(columns.len());
        for (name, col) in columns {
            if names.contains(&name) || name == OUTCOME_COLUMN || name == WEIGHT_COLUMN {
                return Err(DataError::DuplicateColumn(name));
            }
            if col.len() != n {
                return Err(DataError::ColumnLength {
                    name,
                    expected: n,
                    got: col.len(),
                });
            }
            names.push(name);
            values.push(col);
        }
        Ok(Self {
            names,
            columns: values,
            good,
            weight,
        })
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let position = |name: &str| headers.iter().position(|h| h == name);
        let outcome_at = position(OUTCOME_COLUMN).ok_or_else(|| DataError::MissingColumn(OUTCOME_COLUMN.into()))?;
        let weight_at = position(WEIGHT_COLUMN);
        let feature_at: Vec<usize> = (0..headers.len())
            .filter(|&i| i != outcome_at && Some(i) != weight_at)
            .collect();
        for (i, h) in headers.iter().enumerate() {
            if headers[..i].contains(h) {
                return Err(DataError::DuplicateColumn(h.clone()));
            }
        }

        let mut columns = vec![Vec::new(); feature_at.len()];
        let mut good = Vec::new();
        let mut weight = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != headers.len() {
                return Err(DataError::RowLength {
                    row,
                    expected: headers.len(),
                    got: record.len(),
                });
            }
            let outcome = &record[outcome_at];
            good.push(match outcome {
                "1" | "1.0" => true,
                "0" | "0.0" => false,
                other => {
                    return Err(DataError::InvalidOutcome {
                        row,
                        value: other.to_string(),
                    })
                }
            });
            let parse = |i: usize| -> Result<f64, DataError> {
                let raw = &record[i];
                parse_number(raw).ok_or_else(|| DataError::Parse {
                    row,
                    column: headers[i].clone(),
                    value: raw.to_string(),
                })
            };
            weight.push(match weight_at {
                Some(i) => parse(i)?,
                None => 1.0,
            });
            for (col, &i) in columns.iter_mut().zip(&feature_at) {
                col.push(parse(i)?);
            }
        }
        let named = feature_at.iter().map(|&i| headers[i].clone()).zip(columns).collect();
        Self::new(named, good, Some(weight))
    }

    pub fn from_path(path: &Path) -> Result<Self, DataError> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    /// Writes `outcome,weight,<columns…>`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec![OUTCOME_COLUMN.to_string(), WEIGHT_COLUMN.to_string()];
        header.extend(self.names.iter().cloned());
        wtr.write_record(&header)?;
        for i in 0..self.len() {
            let mut record = vec![
                if self.good[i] { "1".to_string() } else { "0".to_string() },
                self.weight[i].to_string(),
            ];
            record.extend(self.columns.iter().map(|c| c[i].to_string()));
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.good.len()
    }

    pub fn is_empty(&self) -> bool {
        self.good.is_empty()
    }

    pub fn column_names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn require_column(&self, name: &str) -> Result<&[f64], DataError> {
        self.column(name).ok_or_else(|| DataError::MissingColumn(name.to_string()))
    }

    pub fn is_good(&self, row: usize) -> bool {
        self.good[row]
    }

    pub fn outcomes(&self) -> &[bool] {
        &self.good
    }

    pub fn weights(&self) -> &[f64] {
        &self.weight
    }

    /// Total weight of good and bad records.
    pub fn class_weights(&self) -> (f64, f64) {
        self.good
            .iter()
            .zip(&self.weight)
            .fold((0.0, 0.0), |(g, b), (&is_good, &w)| if is_good { (g + w, b) } else { (g, b + w) })
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| indices.iter().map(|&i| c[i]).collect())
                .collect(),
            good: indices.iter().map(|&i| self.good[i]).collect(),
            weight: indices.iter().map(|&i| self.weight[i]).collect(),
        }
    }

    /// Deterministic development/validation split. Both parts keep the
    /// original row order.
    pub fn split(&self, val_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
        if !(val_fraction > 0.0 && val_fraction < 1.0) {
            return Err(DataError::InvalidFraction(val_fraction));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_val = (val_fraction * self.len() as f64).round() as usize;
        let (val, dev) = order.split_at_mut(n_val);
        val.sort_unstable();
        dev.sort_unstable();
        Ok((self.subset(dev), self.subset(val)))
    }

    pub fn ensure_max_rows(&self, cap: usize) -> Result<(), DataError> {
        if self.len() > cap {
            Err(DataError::TooManyRows { rows: self.len(), cap })
        } else {
            Ok(())
        }
    }
}

/// Accepts ordinary decimals plus `inf`/`-inf` spellings.
fn parse_number(raw: &str) -> Option<f64> {
    match raw.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" => Some(f64::INFINITY),
        "-inf" | "-infinity" => Some(f64::NEG_INFINITY),
        other => other.parse::<f64>().ok().filter(|v| !v.is_nan()),
    }
}
