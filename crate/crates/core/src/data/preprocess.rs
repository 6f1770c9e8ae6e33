//! Imputation, categorical encoding and feature scaling.
//!
//! Everything is fit on training rows only and then applied frozen to test
//! rows.
//!
//! - min-max: `(x - min) / (max - min)`, a constant column maps to 0.
//! - z-score: `(x - mean) / std` with the population standard deviation
//!   (divide by `n`); a constant column maps to 0.

use serde::{Deserialize, Serialize};

use super::ingest::{Cell, RawTable};
use super::{ColumnKind, DatasetSchema, FeatureMatrix};
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Category assigned to missing and unseen categorical cells.
pub const UNKNOWN_CATEGORY: &str = "<unknown>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    #[serde(rename = "minmax")]
    MinMax,
    #[serde(rename = "zscore")]
    ZScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalerColumn {
    MinMax { min: f64, max: f64 },
    ZScore { mean: f64, std: f64 },
}

impl ScalerColumn {
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            ScalerColumn::MinMax { min, max } => {
                if max > min {
                    (x - min) / (max - min)
                } else {
                    0.0
                }
            }
            ScalerColumn::ZScore { mean, std } => {
                if std > 0.0 {
                    (x - mean) / std
                } else {
                    0.0
                }
            }
        }
    }
}

/// Per-column scaling state recorded at fit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub scaling: Scaling,
    pub columns: Vec<ScalerColumn>,
}

impl Scaler {
    pub fn fit(x: &Tensor, scaling: Scaling) -> Result<Scaler> {
        let (rows, cols) = (x.rows(), x.row_width());
        if rows == 0 {
            return Err(Error::Preprocess("cannot fit a scaler on zero rows".into()));
        }
        let columns = (0..cols)
            .map(|j| {
                let col = (0..rows).map(|i| x.values()[i * cols + j]);
                match scaling {
                    Scaling::MinMax => {
                        let (min, max) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                            (lo.min(v), hi.max(v))
                        });
                        ScalerColumn::MinMax { min, max }
                    }
                    Scaling::ZScore => {
                        let n = rows as f64;
                        let mean = col.clone().sum::<f64>() / n;
                        let var = col.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                        ScalerColumn::ZScore { mean, std: var.sqrt() }
                    }
                }
            })
            .collect();
        Ok(Scaler { scaling, columns })
    }

    pub fn transform(&self, x: &Tensor) -> Result<Tensor> {
        let cols = x.row_width();
        if cols != self.columns.len() {
            return Err(Error::structural(format!(
                "scaler fit on {} columns applied to {cols}",
                self.columns.len()
            )));
        }
        let mut out = x.clone();
        for (i, v) in out.values_mut().iter_mut().enumerate() {
            *v = self.columns[i % cols].apply(*v);
        }
        Ok(out)
    }

    /// Scales a feature matrix and records this scaler on it.
    pub fn apply(&self, m: &FeatureMatrix) -> Result<FeatureMatrix> {
        Ok(FeatureMatrix {
            x: self.transform(&m.x)?,
            y: m.y.clone(),
            num_classes: m.num_classes,
            scaler: Some(self.clone()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnEncoder {
    /// Missing cells take the training median.
    Numeric { median: f64 },
    /// Codes follow first appearance in the training rows.
    Categorical { vocabulary: Vec<String> },
}

impl ColumnEncoder {
    fn encode(&self, cell: &Cell) -> f64 {
        match (self, cell) {
            (ColumnEncoder::Numeric { median }, Cell::Missing) => *median,
            (ColumnEncoder::Numeric { .. }, Cell::Number(v)) => *v,
            (ColumnEncoder::Numeric { median }, Cell::Text(_)) => *median,
            (ColumnEncoder::Categorical { vocabulary }, cell) => {
                let token = match cell {
                    Cell::Text(s) => s.as_str(),
                    _ => UNKNOWN_CATEGORY,
                };
                let code = vocabulary
                    .iter()
                    .position(|v| v == token)
                    .or_else(|| vocabulary.iter().position(|v| v == UNKNOWN_CATEGORY))
                    .unwrap_or(vocabulary.len());
                code as f64
            }
        }
    }
}

/// Fitted preprocessing state: encoders then scaler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub encoders: Vec<ColumnEncoder>,
    pub scaler: Scaler,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

impl Preprocessor {
    pub fn fit(table: &RawTable, schema: &DatasetSchema, scaling: Scaling) -> Result<Preprocessor> {
        if table.columns.len() != schema.features.len() {
            return Err(Error::structural("table does not match schema"));
        }
        let encoders = schema
            .features
            .iter()
            .zip(&table.columns)
            .map(|(col, cells)| match col.kind {
                ColumnKind::Numeric => {
                    let mut present: Vec<f64> = cells
                        .iter()
                        .filter_map(|c| match c {
                            Cell::Number(v) => Some(*v),
                            _ => None,
                        })
                        .collect();
                    if present.is_empty() {
                        return Err(Error::Preprocess(format!(
                            "column '{}' has no values to impute from",
                            col.name
                        )));
                    }
                    Ok(ColumnEncoder::Numeric {
                        median: median(&mut present),
                    })
                }
                ColumnKind::Categorical => {
                    let mut vocabulary: Vec<String> = Vec::new();
                    for c in cells {
                        let token = match c {
                            Cell::Text(s) => s.as_str(),
                            _ => UNKNOWN_CATEGORY,
                        };
                        if !vocabulary.iter().any(|v| v == token) {
                            vocabulary.push(token.to_owned());
                        }
                    }
                    if vocabulary.iter().all(|v| v == UNKNOWN_CATEGORY) {
                        return Err(Error::Preprocess(format!("column '{}' has only missing values", col.name)));
                    }
                    Ok(ColumnEncoder::Categorical { vocabulary })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let encoded = encode(&encoders, table)?;
        let scaler = Scaler::fit(&encoded, scaling)?;
        Ok(Preprocessor { encoders, scaler })
    }

    pub fn transform(&self, table: &RawTable, num_classes: usize) -> Result<FeatureMatrix> {
        let encoded = encode(&self.encoders, table)?;
        let mut m = FeatureMatrix::new(encoded, table.labels.clone(), num_classes)?;
        m.x = self.scaler.transform(&m.x)?;
        m.scaler = Some(self.scaler.clone());
        Ok(m)
    }
}

fn encode(encoders: &[ColumnEncoder], table: &RawTable) -> Result<Tensor> {
    let (rows, cols) = (table.rows(), encoders.len());
    if table.columns.len() != cols {
        return Err(Error::structural("table does not match fitted encoders"));
    }
    let mut data = vec![0.0; rows * cols];
    for (j, (enc, cells)) in encoders.iter().zip(&table.columns).enumerate() {
        for (i, cell) in cells.iter().enumerate() {
            data[i * cols + j] = enc.encode(cell);
        }
    }
    Tensor::new(vec![rows, cols], data)
}

/// Fits on `table` and transforms it in one go.
pub fn preprocess(table: &RawTable, schema: &DatasetSchema, scaling: Scaling) -> Result<(FeatureMatrix, Preprocessor)> {
    let pre = Preprocessor::fit(table, schema, scaling)?;
    let m = pre.transform(table, schema.classes.len())?;
    Ok((m, pre))
}
