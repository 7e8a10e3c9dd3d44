use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Result, RiskError};
use crate::join::JoinResult;
use crate::qi::normalize_attribute;
use crate::table::RecordTable;

pub const DEFAULT_MAX_CATEGORIES: usize = 12;
pub const OTHER_BUCKET: &str = "⟨other⟩";
/// Separator between the left and right value of an attribute present on
/// both sides of a join but not part of its key.
pub const TRANSITION_ARROW: &str = " → ";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCount {
    pub value: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Axis {
    pub attr: String,
    pub categories: Vec<CategoryCount>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ribbon {
    pub from: String,
    pub to: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RibbonSet {
    pub from_attr: String,
    pub to_attr: String,
    pub ribbons: Vec<Ribbon>,
}

/// Category frequencies per axis and contingency counts between adjacent
/// axes, over the joined rows of a join.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelSetsModel {
    pub axes: Vec<Axis>,
    pub ribbons: Vec<RibbonSet>,
    pub total: u64,
}

impl ParallelSetsModel {
    /// Every axis and every ribbon set sums to `total`.
    pub fn is_conserved(&self) -> bool {
        self.axes
            .iter()
            .all(|a| a.categories.iter().map(|c| c.count).sum::<u64>() == self.total)
            && self
                .ribbons
                .iter()
                .all(|r| r.ribbons.iter().map(|x| x.count).sum::<u64>() == self.total)
    }
}

#[derive(Debug, Clone, Copy)]
enum AxisSource {
    Left(usize),
    Right(usize),
    Transition(usize, usize),
}

/// Resolves an axis name against the joined schema. `left.<attr>` and
/// `right.<attr>` pick one side; a bare name that is part of the key or
/// exists on one side only reads that column; a bare non-key name present
/// on both sides yields `left → right` transition values.
fn resolve_axis(
    name: &str,
    result: &JoinResult,
    left: &RecordTable,
    right: &RecordTable,
) -> Result<(String, AxisSource)> {
    let trimmed = name.trim();
    if let Some(attr) = trimmed.strip_prefix("left.") {
        let attr = normalize_attribute(attr);
        let col = left.column_index(&attr)?;
        return Ok((format!("left.{attr}"), AxisSource::Left(col)));
    }
    if let Some(attr) = trimmed.strip_prefix("right.") {
        let attr = normalize_attribute(attr);
        let col = right.column_index(&attr)?;
        return Ok((format!("right.{attr}"), AxisSource::Right(col)));
    }
    let attr = normalize_attribute(trimmed);
    let in_left = left.column_index(&attr).ok();
    let in_right = right.column_index(&attr).ok();
    let source = match (in_left, in_right) {
        (Some(l), _) if result.spec.key_attrs.contains(&attr) => AxisSource::Left(l),
        (Some(l), Some(r)) => AxisSource::Transition(l, r),
        (Some(l), None) => AxisSource::Left(l),
        (None, Some(r)) => AxisSource::Right(r),
        (None, None) => return Err(RiskError::UnknownAttribute(attr)),
    };
    Ok((attr, source))
}

fn value_of(source: AxisSource, row: (usize, usize), left: &RecordTable, right: &RecordTable) -> String {
    match source {
        AxisSource::Left(c) => left.cell(row.0, c).to_string(),
        AxisSource::Right(c) => right.cell(row.1, c).to_string(),
        AxisSource::Transition(l, r) => {
            format!("{}{TRANSITION_ARROW}{}", left.cell(row.0, l), right.cell(row.1, r))
        }
    }
}

pub fn parallel_sets_model<S: AsRef<str>>(
    result: &JoinResult,
    left: &RecordTable,
    right: &RecordTable,
    axes: &[S],
    max_categories: usize,
) -> Result<ParallelSetsModel> {
    if axes.is_empty() {
        return Err(RiskError::InvalidParameter("at least one axis is required".into()));
    }
    if max_categories == 0 {
        return Err(RiskError::InvalidParameter("max_categories must be positive".into()));
    }
    let resolved = axes
        .iter()
        .map(|a| resolve_axis(a.as_ref(), result, left, right))
        .collect::<Result<Vec<_>>>()?;
    if result.joined_rows.is_empty() {
        return Err(RiskError::EmptyResult);
    }

    // Raw values per axis, then bucketed.
    let raw: Vec<Vec<String>> = resolved
        .iter()
        .map(|(_, src)| {
            result
                .joined_rows
                .iter()
                .map(|&row| value_of(*src, row, left, right))
                .collect()
        })
        .collect();
    let mut bucketed: Vec<Vec<String>> = Vec::with_capacity(raw.len());
    let mut axes_out = Vec::with_capacity(raw.len());
    for ((attr, _), values) in resolved.iter().zip(raw) {
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for v in &values {
            *counts.entry(v.as_str()).or_insert(0) += 1;
        }
        let mut ordered: Vec<(&str, u64)> = counts.into_iter().collect();
        ordered.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let kept: HashMap<&str, ()> = ordered
            .iter()
            .take(max_categories)
            .map(|(v, _)| (*v, ()))
            .collect();
        let mut categories: Vec<CategoryCount> = ordered
            .iter()
            .take(max_categories)
            .map(|(v, c)| CategoryCount {
                value: v.to_string(),
                count: *c,
            })
            .collect();
        let other: u64 = ordered.iter().skip(max_categories).map(|(_, c)| c).sum();
        if other > 0 {
            categories.push(CategoryCount {
                value: OTHER_BUCKET.to_string(),
                count: other,
            });
        }
        let mapped: Vec<String> = values
            .iter()
            .map(|v| {
                if kept.contains_key(v.as_str()) {
                    v.clone()
                } else {
                    OTHER_BUCKET.to_string()
                }
            })
            .collect();
        bucketed.push(mapped);
        axes_out.push(Axis {
            attr: attr.clone(),
            categories,
        });
    }

    let ribbons = bucketed
        .windows(2)
        .zip(axes_out.windows(2))
        .map(|(vals, names)| {
            let mut flows: BTreeMap<(&str, &str), u64> = BTreeMap::new();
            for (a, b) in vals[0].iter().zip(&vals[1]) {
                *flows.entry((a.as_str(), b.as_str())).or_insert(0) += 1;
            }
            RibbonSet {
                from_attr: names[0].attr.clone(),
                to_attr: names[1].attr.clone(),
                ribbons: flows
                    .into_iter()
                    .map(|((f, t), count)| Ribbon {
                        from: f.to_string(),
                        to: t.to_string(),
                        count,
                    })
                    .collect(),
            }
        })
        .collect();

    Ok(ParallelSetsModel {
        axes: axes_out,
        ribbons,
        total: result.joined_rows.len() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::join::{execute_join, JoinSpec};
    use crate::qi::QuasiIdentifierDictionary;

    fn table(header: &[&str], rows: &[&[&str]]) -> RecordTable {
        RecordTable::from_rows(
            header,
            rows.iter().map(|r| r.iter().map(|c| c.to_string()).collect::<Vec<_>>()),
            &QuasiIdentifierDictionary::builtin(),
        )
        .unwrap()
    }

    #[test]
    fn single_row_gives_unit_ribbon() {
        let a = table(&["k", "a"], &[&["1", "x"]]);
        let b = table(&["k", "b"], &[&["1", "y"]]);
        let spec = JoinSpec::new("l", "r", &["k"], &a, &b).unwrap();
        let r = execute_join(&a, &b, &spec, 100).unwrap();
        let m = parallel_sets_model(&r, &a, &b, &["a", "b"], 12).unwrap();
        assert_eq!(m.total, 1);
        assert_eq!(m.ribbons[0].ribbons, [Ribbon { from: "x".into(), to: "y".into(), count: 1 }]);
        assert!(m.is_conserved());
    }

    #[test]
    fn transition_axis_isolates_status_change() {
        let a = table(
            &["k", "disposition"],
            &[&["1", "OPEN"], &["2", "CLOSED"], &["3", "CLOSED"]],
        );
        let b = table(
            &["k", "disposition"],
            &[&["1", "CLOSED"], &["2", "CLOSED"], &["3", "CLOSED"]],
        );
        let spec = JoinSpec::new("l", "r", &["k"], &a, &b).unwrap();
        let r = execute_join(&a, &b, &spec, 100).unwrap();
        let m = parallel_sets_model(&r, &a, &b, &["disposition"], 12).unwrap();
        let open = m.axes[0]
            .categories
            .iter()
            .find(|c| c.value == "OPEN → CLOSED")
            .unwrap();
        assert_eq!(open.count, 1);
        let m = parallel_sets_model(&r, &a, &b, &["left.disposition", "k"], 12).unwrap();
        assert_eq!(m.axes[0].attr, "left.disposition");
        assert!(m.is_conserved());
    }

    #[test]
    fn buckets_rare_categories() {
        let rows: Vec<Vec<String>> = (0..20).map(|i| vec!["k".into(), format!("v{}", i % 5)]).collect();
        let a = RecordTable::from_rows(&["k", "v"], rows, &QuasiIdentifierDictionary::builtin()).unwrap();
        let b = table(&["k"], &[&["k"]]);
        let spec = JoinSpec::new("l", "r", &["k"], &a, &b).unwrap();
        let r = execute_join(&a, &b, &spec, 100).unwrap();
        let m = parallel_sets_model(&r, &a, &b, &["v", "k"], 2).unwrap();
        assert_eq!(m.axes[0].categories.len(), 3);
        assert_eq!(m.axes[0].categories[2].value, OTHER_BUCKET);
        assert_eq!(m.axes[0].categories[2].count, 12);
        assert!(m.is_conserved());
    }

    #[test]
    fn errors() {
        let a = table(&["k"], &[&["1"]]);
        let b = table(&["k"], &[&["2"]]);
        let spec = JoinSpec::new("l", "r", &["k"], &a, &b).unwrap();
        let r = execute_join(&a, &b, &spec, 100).unwrap();
        assert_eq!(parallel_sets_model(&r, &a, &b, &["k"], 3).unwrap_err().code(), "EmptyResult");
        assert_eq!(parallel_sets_model(&r, &a, &b, &["zz"], 3).unwrap_err().code(), "UnknownAttribute");
    }
}
