//! Per-dataset disclosure-risk measures over equivalence classes.
//!
//! Cells are compared as trimmed text. Empty cells are a category of their
//! own, so missing values never shrink a class.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RiskError};
use crate::qi::{normalize_attribute, QuasiIdentifierDictionary, SemanticClass};
use crate::table::RecordTable;

pub const DEFAULT_ENTRY_POINT_THRESHOLD: usize = 5;

/// Rows grouped by their tuple of key-attribute values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceClassPartition {
    pub key_attrs: Vec<String>,
    pub classes: BTreeMap<Vec<String>, Vec<usize>>,
    pub total_rows: usize,
}

impl EquivalenceClassPartition {
    pub fn class_sizes(&self) -> impl Iterator<Item = usize> + '_ {
        self.classes.values().map(Vec::len)
    }

    pub fn singleton_count(&self) -> usize {
        self.class_sizes().filter(|&s| s == 1).count()
    }
}

fn normalized_names<S: AsRef<str>>(names: &[S]) -> Vec<String> {
    names.iter().map(|n| normalize_attribute(n.as_ref())).collect()
}

pub fn partition<S: AsRef<str>>(
    table: &RecordTable,
    key_attrs: &[S],
) -> Result<EquivalenceClassPartition> {
    if key_attrs.is_empty() {
        return Err(RiskError::InvalidParameter("key attributes must be nonempty".into()));
    }
    let key_attrs = normalized_names(key_attrs);
    let cols = table.column_indices(&key_attrs)?;
    let mut classes: BTreeMap<Vec<String>, Vec<usize>> = BTreeMap::new();
    for row in 0..table.len() {
        classes.entry(table.key_tuple(row, &cols)).or_default().push(row);
    }
    Ok(EquivalenceClassPartition {
        key_attrs,
        classes,
        total_rows: table.len(),
    })
}

/// Smallest equivalence-class size.
pub fn k_anonymity(p: &EquivalenceClassPartition) -> Result<usize> {
    p.class_sizes().min().ok_or(RiskError::EmptyTable)
}

fn sensitive_column(
    p: &EquivalenceClassPartition,
    table: &RecordTable,
    sensitive_attr: &str,
) -> Result<usize> {
    if p.total_rows == 0 || table.is_empty() {
        return Err(RiskError::EmptyTable);
    }
    if p.total_rows != table.len() {
        return Err(RiskError::InvalidParameter(
            "partition was built from a different table".into(),
        ));
    }
    table.column_index(&normalize_attribute(sensitive_attr))
}

/// Smallest number of distinct sensitive values inside any class.
pub fn l_diversity(
    p: &EquivalenceClassPartition,
    table: &RecordTable,
    sensitive_attr: &str,
) -> Result<usize> {
    let col = sensitive_column(p, table, sensitive_attr)?;
    p.classes
        .values()
        .map(|rows| {
            rows.iter()
                .map(|&r| table.cell(r, col))
                .collect::<BTreeSet<_>>()
                .len()
        })
        .min()
        .ok_or(RiskError::EmptyTable)
}

/// Largest total-variation distance between a class's sensitive-value
/// distribution and the whole table's.
pub fn t_closeness(
    p: &EquivalenceClassPartition,
    table: &RecordTable,
    sensitive_attr: &str,
) -> Result<f64> {
    let col = sensitive_column(p, table, sensitive_attr)?;
    let global = value_counts(table, col, 0..table.len());
    let n = table.len() as u128;
    let mut worst = 0.0f64;
    for rows in p.classes.values() {
        let local = value_counts(table, col, rows.iter().copied());
        let m = rows.len() as u128;
        // Σ |local/m − global/n| computed over a common denominator so an
        // identical distribution yields exactly zero.
        let numer: u128 = global
            .iter()
            .map(|(v, &g)| {
                let l = *local.get(v).unwrap_or(&0) as u128;
                (l * n).abs_diff(g as u128 * m)
            })
            .sum();
        let tvd = numer as f64 / (2 * m * n) as f64;
        worst = worst.max(tvd);
    }
    Ok(worst.clamp(0.0, 1.0))
}

fn value_counts(
    table: &RecordTable,
    col: usize,
    rows: impl Iterator<Item = usize>,
) -> BTreeMap<&str, usize> {
    let mut counts = BTreeMap::new();
    for r in rows {
        *counts.entry(table.cell(r, col)).or_insert(0) += 1;
    }
    counts
}

fn entropy_of_counts<I: IntoIterator<Item = usize>>(counts: I, total: usize) -> f64 {
    let n = total as f64;
    let h: f64 = counts
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

fn column_for(table: &RecordTable, attr: &str) -> Result<usize> {
    let col = table.column_index(&normalize_attribute(attr))?;
    if table.is_empty() {
        return Err(RiskError::EmptyTable);
    }
    Ok(col)
}

/// Shannon entropy in bits of the column's empirical distribution.
pub fn attribute_entropy(table: &RecordTable, attr: &str) -> Result<f64> {
    let col = column_for(table, attr)?;
    let counts = value_counts(table, col, 0..table.len());
    Ok(entropy_of_counts(counts.into_values(), table.len()))
}

/// `1 − H / log2(distinct)`; zero for a single-valued column.
pub fn skew_score(table: &RecordTable, attr: &str) -> Result<f64> {
    let col = column_for(table, attr)?;
    let counts = value_counts(table, col, 0..table.len());
    let distinct = counts.len();
    if distinct <= 1 {
        return Ok(0.0);
    }
    let h = entropy_of_counts(counts.into_values(), table.len());
    Ok((1.0 - h / (distinct as f64).log2()).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSummary {
    pub key_attrs: Vec<String>,
    pub k: usize,
    pub l_per_sensitive: BTreeMap<String, usize>,
    pub t_per_sensitive: BTreeMap<String, f64>,
    pub singleton_classes: usize,
    pub skew: BTreeMap<String, f64>,
}

/// k over `key_attrs`, l and t per sensitive attribute, skew per key
/// attribute.
pub fn summarize<S: AsRef<str>, T: AsRef<str>>(
    table: &RecordTable,
    key_attrs: &[S],
    sensitive_attrs: &[T],
) -> Result<RiskSummary> {
    let p = partition(table, key_attrs)?;
    let k = k_anonymity(&p)?;
    let mut l_per_sensitive = BTreeMap::new();
    let mut t_per_sensitive = BTreeMap::new();
    for s in sensitive_attrs {
        let name = normalize_attribute(s.as_ref());
        l_per_sensitive.insert(name.clone(), l_diversity(&p, table, &name)?);
        t_per_sensitive.insert(name.clone(), t_closeness(&p, table, &name)?);
    }
    let mut skew = BTreeMap::new();
    for a in &p.key_attrs {
        skew.insert(a.clone(), skew_score(table, a)?);
    }
    Ok(RiskSummary {
        key_attrs: p.key_attrs.clone(),
        k,
        singleton_classes: p.singleton_count(),
        l_per_sensitive,
        t_per_sensitive,
        skew,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryPointFinding {
    pub key_attrs: Vec<String>,
    pub key: Vec<String>,
    pub class_size: usize,
    pub rows: Vec<usize>,
}

/// Equivalence classes of size at most `threshold` over `qi_attrs` (and
/// over every nonempty subset of them when `subsets` is set), smallest
/// first.
pub fn vulnerable_entry_points<S: AsRef<str>>(
    table: &RecordTable,
    qi_attrs: &[S],
    threshold: usize,
    subsets: bool,
) -> Result<Vec<EntryPointFinding>> {
    if qi_attrs.is_empty() {
        return Err(RiskError::InvalidParameter("qi attributes must be nonempty".into()));
    }
    let attrs = normalized_names(qi_attrs);
    table.column_indices(&attrs)?;
    if threshold == 0 {
        return Ok(Vec::new());
    }
    let key_sets: Vec<Vec<String>> = if subsets {
        if attrs.len() > 16 {
            return Err(RiskError::InvalidParameter(
                "subset enumeration is limited to 16 attributes".into(),
            ));
        }
        (1u32..(1 << attrs.len()))
            .map(|mask| {
                attrs
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, a)| a.clone())
                    .collect()
            })
            .collect()
    } else {
        vec![attrs]
    };
    let mut out = Vec::new();
    for keys in key_sets {
        let p = partition(table, &keys)?;
        for (key, rows) in p.classes {
            if rows.len() <= threshold {
                out.push(EntryPointFinding {
                    key_attrs: keys.clone(),
                    class_size: rows.len(),
                    key,
                    rows,
                });
            }
        }
    }
    out.sort_by(|a, b| {
        a.class_size
            .cmp(&b.class_size)
            .then_with(|| a.key_attrs.len().cmp(&b.key_attrs.len()))
            .then_with(|| a.key_attrs.cmp(&b.key_attrs))
            .then_with(|| a.key.cmp(&b.key))
    });
    Ok(out)
}

/// Entropy of one attribute in each of two datasets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyPair {
    pub left: f64,
    pub right: f64,
    pub min: f64,
}

pub fn entropy_pair(left: &RecordTable, right: &RecordTable, attr: &str) -> Result<EntropyPair> {
    let l = attribute_entropy(left, attr)?;
    let r = attribute_entropy(right, attr)?;
    Ok(EntropyPair {
        left: l,
        right: r,
        min: l.min(r),
    })
}

/// Key attributes for a scan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScanKeys {
    /// Every quasi-identifier column of the table.
    Auto,
    Explicit(Vec<String>),
}

impl FromStr for ScanKeys {
    type Err = RiskError;

    /// `auto` or a comma-separated attribute list.
    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("auto") {
            return Ok(ScanKeys::Auto);
        }
        let attrs: Vec<String> = s
            .split(',')
            .map(str::trim)
            .filter(|a| !a.is_empty())
            .map(String::from)
            .collect();
        if attrs.is_empty() {
            return Err(RiskError::InvalidParameter("keys must be 'auto' or a nonempty list".into()));
        }
        Ok(ScanKeys::Explicit(attrs))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub dataset: String,
    pub rows: usize,
    pub threshold: usize,
    pub subsets: bool,
    pub summary: RiskSummary,
    pub entry_points: Vec<EntryPointFinding>,
}

/// Summary metrics plus entry points for one table. Sensitive columns not
/// in the key get l and t.
pub fn scan_table(
    dataset: &str,
    table: &RecordTable,
    keys: &ScanKeys,
    threshold: usize,
    subsets: bool,
    dict: &QuasiIdentifierDictionary,
) -> Result<ScanReport> {
    let key_attrs: Vec<String> = match keys {
        ScanKeys::Explicit(attrs) => normalized_names(attrs),
        ScanKeys::Auto => table
            .attributes()
            .iter()
            .filter(|a| dict.classify(&a.normalized_name) == SemanticClass::QuasiIdentifier)
            .map(|a| a.normalized_name.clone())
            .collect(),
    };
    if key_attrs.is_empty() {
        return Err(RiskError::InvalidParameter(format!(
            "dataset '{dataset}' has no quasi-identifier columns"
        )));
    }
    let sensitive: Vec<&str> = table
        .attributes()
        .iter()
        .filter(|a| {
            dict.classify(&a.normalized_name) == SemanticClass::Sensitive
                && !key_attrs.contains(&a.normalized_name)
        })
        .map(|a| a.normalized_name.as_str())
        .collect();
    Ok(ScanReport {
        dataset: dataset.to_string(),
        rows: table.len(),
        threshold,
        subsets,
        summary: summarize(table, &key_attrs, &sensitive)?,
        entry_points: vulnerable_entry_points(table, &key_attrs, threshold, subsets)?,
    })
}
