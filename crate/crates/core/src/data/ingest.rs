use std::io::Read;
use std::path::Path;

use super::{ColumnKind, DatasetSchema};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Number(f64),
    Text(String),
    Missing,
}

impl Cell {
    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }
}

/// Typed CSV contents aligned with a [`DatasetSchema`].
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    /// Column-major cells in schema feature order.
    pub columns: Vec<Vec<Cell>>,
    /// Class index of every row.
    pub labels: Vec<usize>,
}

impl RawTable {
    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn select(&self, indices: &[usize]) -> RawTable {
        RawTable {
            columns: self
                .columns
                .iter()
                .map(|col| indices.iter().map(|&i| col[i].clone()).collect())
                .collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Number of missing cells per column.
    pub fn missing_counts(&self) -> Vec<usize> {
        self.columns
            .iter()
            .map(|c| c.iter().filter(|v| v.is_missing()).count())
            .collect()
    }
}

fn is_missing_token(s: &str) -> bool {
    s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan")
}

pub fn load_csv(path: &Path, schema: &DatasetSchema) -> Result<RawTable> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Schema(format!("cannot open {}: {e}", path.display())))?;
    read_csv(file, schema)
}

/// Parses CSV text (header row first, comma separated, quoting allowed).
///
/// Extra columns not named by the schema are ignored.
pub fn read_csv<R: Read>(reader: R, schema: &DatasetSchema) -> Result<RawTable> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Schema(format!("cannot read header: {e}")))?
        .clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(Error::Schema("empty file".into()));
    }
    let position = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("header is missing column '{name}'")))
    };
    let feature_pos = schema
        .features
        .iter()
        .map(|f| position(&f.name))
        .collect::<Result<Vec<_>>>()?;
    let label_pos = position(&schema.label)?;

    let mut columns = vec![Vec::new(); schema.features.len()];
    let mut labels = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Ingestion {
            row,
            column: "*".into(),
            message: e.to_string(),
        })?;
        for ((col, &pos), out) in schema.features.iter().zip(&feature_pos).zip(&mut columns) {
            let raw = record.get(pos).unwrap_or("").trim();
            let cell = if is_missing_token(raw) {
                Cell::Missing
            } else {
                match col.kind {
                    ColumnKind::Categorical => Cell::Text(raw.to_owned()),
                    ColumnKind::Numeric => match raw.parse::<f64>() {
                        Ok(v) if v.is_finite() => Cell::Number(v),
                        _ => {
                            return Err(Error::Ingestion {
                                row,
                                column: col.name.clone(),
                                message: format!("cannot parse '{raw}' as a finite number"),
                            })
                        }
                    },
                }
            };
            out.push(cell);
        }
        let raw_label = record.get(label_pos).unwrap_or("").trim();
        let class = schema
            .classes
            .iter()
            .position(|c| c == raw_label)
            .ok_or_else(|| Error::Ingestion {
                row,
                column: schema.label.clone(),
                message: format!("unknown class '{raw_label}'"),
            })?;
        labels.push(class);
    }
    if labels.is_empty() {
        return Err(Error::Schema("file has a header but no data rows".into()));
    }
    Ok(RawTable { columns, labels })
}
