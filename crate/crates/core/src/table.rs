use std::collections::HashSet;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RiskError};
use crate::qi::{normalize_attribute, AttributeDescriptor, QuasiIdentifierDictionary, ValueKind};

/// Rectangular table of text cells. Every row has exactly one cell per
/// attribute and normalized attribute names are unique.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordTable {
    attributes: Vec<AttributeDescriptor>,
    rows: Vec<Vec<String>>,
}

impl RecordTable {
    pub fn new(attributes: Vec<AttributeDescriptor>, rows: Vec<Vec<String>>) -> Result<Self> {
        let mut seen = HashSet::new();
        for a in &attributes {
            if !seen.insert(a.normalized_name.as_str()) {
                return Err(RiskError::DuplicateAttribute(a.normalized_name.clone()));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != attributes.len() {
                return Err(RiskError::RowSchemaMismatch {
                    row: i,
                    expected: attributes.len(),
                    found: row.len(),
                });
            }
        }
        Ok(RecordTable { attributes, rows })
    }

    /// Builds a table from raw header names and rows, classifying every
    /// column as categorical against `dict`.
    pub fn from_rows<H, R, C>(header: &[H], rows: R, dict: &QuasiIdentifierDictionary) -> Result<Self>
    where
        H: AsRef<str>,
        R: IntoIterator<Item = Vec<C>>,
        C: Into<String>,
    {
        let attributes = header
            .iter()
            .map(|h| AttributeDescriptor::new(h.as_ref(), ValueKind::Categorical, dict))
            .collect::<Result<Vec<_>>>()?;
        let rows = rows
            .into_iter()
            .map(|r| r.into_iter().map(Into::into).collect())
            .collect();
        RecordTable::new(attributes, rows)
    }

    /// Reads CSV with a header row. Ragged rows are dropped (counted in the
    /// returned tally) unless `strict` is set, in which case the first one
    /// is an error.
    pub fn read_csv<R: Read>(
        reader: R,
        attributes: Vec<AttributeDescriptor>,
        limit: Option<usize>,
        strict: bool,
    ) -> Result<(Self, usize)> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        let width = attributes.len();
        // Column order in the file may differ from the metadata order.
        let mut positions = Vec::with_capacity(width);
        let header_norm: Vec<String> = header.iter().map(normalize_attribute).collect();
        if header_norm.len() != width {
            return Err(RiskError::RowSchemaMismatch {
                row: 0,
                expected: width,
                found: header_norm.len(),
            });
        }
        for a in &attributes {
            let pos = header_norm
                .iter()
                .position(|h| *h == a.normalized_name)
                .ok_or_else(|| RiskError::UnknownAttribute(a.normalized_name.clone()))?;
            positions.push(pos);
        }
        let mut rows = Vec::new();
        let mut dropped = 0usize;
        for (i, rec) in rdr.records().enumerate() {
            if limit.is_some_and(|l| rows.len() >= l) {
                break;
            }
            let rec = rec?;
            if rec.len() != width {
                if strict {
                    return Err(RiskError::RowSchemaMismatch {
                        row: i,
                        expected: width,
                        found: rec.len(),
                    });
                }
                log::warn!("dropping row {i}: {} cells, expected {width}", rec.len());
                dropped += 1;
                continue;
            }
            rows.push(positions.iter().map(|&p| rec[p].to_string()).collect());
        }
        Ok((RecordTable::new(attributes, rows)?, dropped))
    }

    /// Reads a standalone CSV whose header supplies the attribute names.
    /// Every column is categorical.
    pub fn from_csv<R: Read>(reader: R, dict: &QuasiIdentifierDictionary) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(rec?.iter().map(String::from).collect::<Vec<String>>());
        }
        RecordTable::from_rows(&header, rows, dict)
    }

    pub fn from_csv_path(path: &std::path::Path, dict: &QuasiIdentifierDictionary) -> Result<Self> {
        RecordTable::from_csv(std::fs::File::open(path)?, dict)
    }

    pub fn attributes(&self) -> &[AttributeDescriptor] {
        &self.attributes
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[String] {
        &self.rows[i]
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.attributes.len()
    }

    pub fn attribute_names(&self) -> impl Iterator<Item = &str> {
        self.attributes.iter().map(|a| a.normalized_name.as_str())
    }

    pub fn has_attribute(&self, name: &str) -> bool {
        self.attributes.iter().any(|a| a.normalized_name == name)
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.attributes
            .iter()
            .position(|a| a.normalized_name == name)
            .ok_or_else(|| RiskError::UnknownAttribute(name.to_string()))
    }

    pub fn column_indices<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.column_index(n.as_ref())).collect()
    }

    /// Trimmed cell value.
    pub fn cell(&self, row: usize, col: usize) -> &str {
        self.rows[row][col].trim()
    }

    /// Trimmed cells at `cols` for one row.
    pub fn key_tuple(&self, row: usize, cols: &[usize]) -> Vec<String> {
        cols.iter().map(|&c| self.cell(row, c).to_string()).collect()
    }

    /// First `n` rows as a new table.
    pub fn truncated(&self, n: usize) -> RecordTable {
        RecordTable {
            attributes: self.attributes.clone(),
            rows: self.rows.iter().take(n).cloned().collect(),
        }
    }

    pub fn push_row(&mut self, row: Vec<String>) -> Result<()> {
        if row.len() != self.width() {
            return Err(RiskError::RowSchemaMismatch {
                row: self.rows.len(),
                expected: self.width(),
                found: row.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dict() -> QuasiIdentifierDictionary {
        QuasiIdentifierDictionary::builtin()
    }

    #[test]
    fn rejects_ragged_and_duplicate() {
        let err = RecordTable::from_rows(&["a", "b"], vec![vec!["1", "2"], vec!["3"]], &dict()).unwrap_err();
        assert_eq!(err.code(), "RowSchemaMismatch");
        let err = RecordTable::from_rows(&["Age", "AGE"], Vec::<Vec<&str>>::new(), &dict()).unwrap_err();
        assert_eq!(err.code(), "DuplicateAttribute");
    }

    #[test]
    fn csv_drops_ragged_rows_unless_strict() {
        let data = "Age,Sex\n10,F\n11\n12,M\n";
        let attrs = RecordTable::from_rows(&["age", "sex"], Vec::<Vec<&str>>::new(), &dict())
            .unwrap()
            .attributes()
            .to_vec();
        let (t, dropped) = RecordTable::read_csv(data.as_bytes(), attrs.clone(), None, false).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(dropped, 1);
        let err = RecordTable::read_csv(data.as_bytes(), attrs.clone(), None, true).unwrap_err();
        assert_eq!(err.code(), "RowSchemaMismatch");
        let (t, _) = RecordTable::read_csv(data.as_bytes(), attrs, Some(1), false).unwrap();
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn csv_reorders_columns_to_metadata_order() {
        let data = "sex,age\nF, 10 \n";
        let attrs = RecordTable::from_rows(&["age", "sex"], Vec::<Vec<&str>>::new(), &dict())
            .unwrap()
            .attributes()
            .to_vec();
        let (t, _) = RecordTable::read_csv(data.as_bytes(), attrs, None, true).unwrap();
        assert_eq!(t.row(0), [" 10 ".to_string(), "F".to_string()]);
        assert_eq!(t.cell(0, 0), "10");
    }
}
