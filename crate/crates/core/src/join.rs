//! Join-key selection, joinability scoring, equality joins and the
//! disclosure checks that run on their results.
//!
//! Key tuples are compared as trimmed text. A tuple with any empty cell
//! never matches anything.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::cancel::{self, CancelToken};
use crate::error::{Result, RiskError};
use crate::metrics::{attribute_entropy, entropy_pair, EntropyPair};
use crate::qi::{normalize_attribute, AttributeDescriptor, QuasiIdentifierDictionary, SemanticClass};
use crate::table::RecordTable;

pub const DEFAULT_MAX_KEY_ATTRS: usize = 4;
pub const DEFAULT_JOIN_ROW_CAP: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinSpec {
    pub left_id: String,
    pub right_id: String,
    pub key_attrs: Vec<String>,
}

impl JoinSpec {
    /// Validates that the key is nonempty, duplicate-free and present in
    /// both tables. Names are normalized.
    pub fn new<S: AsRef<str>>(
        left_id: impl Into<String>,
        right_id: impl Into<String>,
        key_attrs: &[S],
        left: &RecordTable,
        right: &RecordTable,
    ) -> Result<Self> {
        let key: Vec<String> = key_attrs.iter().map(|k| normalize_attribute(k.as_ref())).collect();
        if key.is_empty() {
            return Err(RiskError::InvalidParameter("join key must be nonempty".into()));
        }
        let unique: BTreeSet<&String> = key.iter().collect();
        if unique.len() != key.len() {
            return Err(RiskError::InvalidParameter("join key repeats an attribute".into()));
        }
        left.column_indices(&key)?;
        right.column_indices(&key)?;
        Ok(JoinSpec {
            left_id: left_id.into(),
            right_id: right_id.into(),
            key_attrs: key,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct JoinabilityScore {
    pub containment: f64,
    pub matched_distinct_keys: usize,
    pub unique_match_fraction: f64,
    pub risk: f64,
}

/// Row indices per non-null key tuple.
pub(crate) fn key_groups(
    table: &RecordTable,
    key: &[String],
) -> Result<BTreeMap<Vec<String>, Vec<usize>>> {
    let cols = table.column_indices(key)?;
    let mut groups: BTreeMap<Vec<String>, Vec<usize>> = BTreeMap::new();
    for row in 0..table.len() {
        let tuple = table.key_tuple(row, &cols);
        if tuple.iter().any(String::is_empty) {
            continue;
        }
        groups.entry(tuple).or_default().push(row);
    }
    Ok(groups)
}

fn normalized_key<S: AsRef<str>>(key: &[S]) -> Result<Vec<String>> {
    if key.is_empty() {
        return Err(RiskError::InvalidParameter("join key must be nonempty".into()));
    }
    Ok(key.iter().map(|k| normalize_attribute(k.as_ref())).collect())
}

pub fn shared_attributes(a: &[AttributeDescriptor], b: &[AttributeDescriptor]) -> BTreeSet<String> {
    let left: BTreeSet<&str> = a.iter().map(|x| x.normalized_name.as_str()).collect();
    b.iter()
        .map(|x| x.normalized_name.as_str())
        .filter(|n| left.contains(n))
        .map(String::from)
        .collect()
}

/// Shared attributes the dictionary classifies as quasi-identifiers.
pub fn shared_quasi_identifiers(
    a: &[AttributeDescriptor],
    b: &[AttributeDescriptor],
    dict: &QuasiIdentifierDictionary,
) -> BTreeSet<String> {
    shared_attributes(a, b)
        .into_iter()
        .filter(|n| dict.classify(n) == SemanticClass::QuasiIdentifier)
        .collect()
}

fn class_rank(class: SemanticClass) -> u8 {
    match class {
        SemanticClass::QuasiIdentifier => 0,
        SemanticClass::Linking => 1,
        _ => 2,
    }
}

/// Picks up to `max_attrs` shared attributes: quasi-identifiers first,
/// then linking attributes, then the rest; within a class by descending
/// minimum per-dataset entropy, then by name.
pub fn auto_join_key(
    a: &RecordTable,
    b: &RecordTable,
    dict: &QuasiIdentifierDictionary,
    max_attrs: usize,
) -> Result<Vec<String>> {
    if max_attrs == 0 {
        return Err(RiskError::InvalidParameter("max_attrs must be positive".into()));
    }
    let shared = shared_attributes(a.attributes(), b.attributes());
    if shared.is_empty() {
        return Err(RiskError::NoSharedAttributes);
    }
    let mut ranked: Vec<(u8, f64, String)> = shared
        .into_iter()
        .map(|name| {
            let h = min_entropy(a, b, &name);
            (class_rank(dict.classify(&name)), h, name)
        })
        .collect();
    ranked.sort_by(|x, y| {
        x.0.cmp(&y.0)
            .then_with(|| y.1.total_cmp(&x.1))
            .then_with(|| x.2.cmp(&y.2))
    });
    Ok(ranked.into_iter().take(max_attrs).map(|r| r.2).collect())
}

fn min_entropy(a: &RecordTable, b: &RecordTable, attr: &str) -> f64 {
    let ea = attribute_entropy(a, attr).unwrap_or(0.0);
    let eb = attribute_entropy(b, attr).unwrap_or(0.0);
    ea.min(eb)
}

/// Overlap of distinct key tuples relative to the smaller side.
pub fn containment<S: AsRef<str>>(a: &RecordTable, b: &RecordTable, key: &[S]) -> Result<f64> {
    Ok(joinability_risk(a, b, key)?.containment)
}

/// Containment times the fraction of matched tuples that occur exactly
/// once on both sides.
pub fn joinability_risk<S: AsRef<str>>(
    a: &RecordTable,
    b: &RecordTable,
    key: &[S],
) -> Result<JoinabilityScore> {
    let key = normalized_key(key)?;
    let ga = key_groups(a, &key)?;
    let gb = key_groups(b, &key)?;
    Ok(score_groups(&ga, &gb))
}

fn score_groups(
    ga: &BTreeMap<Vec<String>, Vec<usize>>,
    gb: &BTreeMap<Vec<String>, Vec<usize>>,
) -> JoinabilityScore {
    if ga.is_empty() || gb.is_empty() {
        return JoinabilityScore::default();
    }
    let (small, large) = if ga.len() <= gb.len() { (ga, gb) } else { (gb, ga) };
    let mut matched = 0usize;
    let mut unique = 0usize;
    for (tuple, rows) in small {
        if let Some(other) = large.get(tuple) {
            matched += 1;
            if rows.len() == 1 && other.len() == 1 {
                unique += 1;
            }
        }
    }
    let containment = matched as f64 / small.len() as f64;
    let unique_match_fraction = if matched == 0 {
        0.0
    } else {
        unique as f64 / matched as f64
    };
    JoinabilityScore {
        containment,
        matched_distinct_keys: matched,
        unique_match_fraction,
        risk: containment * unique_match_fraction,
    }
}

/// Number of unordered pairs among `m` datasets.
pub fn pair_count(m: u64) -> u64 {
    if m < 2 {
        0
    } else {
        m * (m - 1) / 2
    }
}

/// A dataset id with its fetched table.
#[derive(Debug, Clone, Copy)]
pub struct TableRef<'a> {
    pub id: &'a str,
    pub table: &'a RecordTable,
}

impl<'a> TableRef<'a> {
    pub fn new(id: &'a str, table: &'a RecordTable) -> Self {
        TableRef { id, table }
    }
}

/// One bar of the triage view: a shared attribute, its class and entropy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedAttribute {
    pub name: String,
    pub semantic_class: SemanticClass,
    pub entropy: EntropyPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPair {
    pub left: String,
    pub right: String,
    /// `None` when the pair shares no attribute.
    pub spec: Option<JoinSpec>,
    pub score: JoinabilityScore,
    pub shared: Vec<SharedAttribute>,
}

pub fn shared_attribute_details(
    a: &RecordTable,
    b: &RecordTable,
    dict: &QuasiIdentifierDictionary,
) -> Result<Vec<SharedAttribute>> {
    shared_attributes(a.attributes(), b.attributes())
        .into_iter()
        .map(|name| {
            let entropy = if a.is_empty() || b.is_empty() {
                EntropyPair {
                    left: 0.0,
                    right: 0.0,
                    min: 0.0,
                }
            } else {
                entropy_pair(a, b, &name)?
            };
            Ok(SharedAttribute {
                semantic_class: dict.classify(&name),
                entropy,
                name,
            })
        })
        .collect()
}

fn score_pair(
    a: TableRef<'_>,
    b: TableRef<'_>,
    dict: &QuasiIdentifierDictionary,
    max_attrs: usize,
) -> Result<RankedPair> {
    let (a, b) = if a.id <= b.id { (a, b) } else { (b, a) };
    let shared = shared_attribute_details(a.table, b.table, dict)?;
    let (spec, score) = match auto_join_key(a.table, b.table, dict, max_attrs) {
        Ok(key) => {
            let score = joinability_risk(a.table, b.table, &key)?;
            (
                Some(JoinSpec {
                    left_id: a.id.to_string(),
                    right_id: b.id.to_string(),
                    key_attrs: key,
                }),
                score,
            )
        }
        Err(RiskError::NoSharedAttributes) => (None, JoinabilityScore::default()),
        Err(e) => return Err(e),
    };
    Ok(RankedPair {
        left: a.id.to_string(),
        right: b.id.to_string(),
        spec,
        score,
        shared,
    })
}

/// Scores every unordered pair of `members` on its automatic join key,
/// riskiest first.
pub fn rank_pairs(
    members: &[TableRef<'_>],
    dict: &QuasiIdentifierDictionary,
    max_attrs: usize,
    cancel: Option<&CancelToken>,
) -> Result<Vec<RankedPair>> {
    if members.len() < 2 {
        return Err(RiskError::InsufficientMembers(members.len()));
    }
    let mut out = Vec::with_capacity(pair_count(members.len() as u64) as usize);
    for i in 0..members.len() {
        for j in (i + 1)..members.len() {
            cancel::check(cancel)?;
            out.push(score_pair(members[i], members[j], dict, max_attrs)?);
        }
    }
    out.sort_by(|x, y| {
        y.score
            .risk
            .total_cmp(&x.score.risk)
            .then_with(|| y.score.containment.total_cmp(&x.score.containment))
            .then_with(|| (&x.left, &x.right).cmp(&(&y.left, &y.right)))
    });
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyMatch {
    pub key: Vec<String>,
    pub left_rows: Vec<usize>,
    pub right_rows: Vec<usize>,
}

impl KeyMatch {
    pub fn multiplicity(&self) -> u64 {
        self.left_rows.len() as u64 * self.right_rows.len() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinResult {
    pub spec: JoinSpec,
    /// Matched key tuples in ascending order, with full multiplicity.
    pub matches: Vec<KeyMatch>,
    /// `(left row, right row)` pairs, at most `row_cap` of them.
    pub joined_rows: Vec<(usize, usize)>,
    /// Σ left × right over `matches`, regardless of the cap.
    pub total_joined: u64,
    pub truncated: bool,
}

impl JoinResult {
    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    /// Mean joined rows per matched key tuple.
    pub fn mean_multiplicity(&self) -> f64 {
        if self.matches.is_empty() {
            0.0
        } else {
            self.total_joined as f64 / self.matches.len() as f64
        }
    }

    pub fn check_complete(&self) -> Result<()> {
        if self.truncated {
            Err(RiskError::ResultTooLarge {
                produced: self.total_joined,
                cap: self.joined_rows.len(),
            })
        } else {
            Ok(())
        }
    }
}

/// Inner equality join. When the joined rows exceed `row_cap` the row list
/// is cut and `truncated` is set; `matches` stay complete.
pub fn execute_join(
    a: &RecordTable,
    b: &RecordTable,
    spec: &JoinSpec,
    row_cap: usize,
) -> Result<JoinResult> {
    let ga = key_groups(a, &spec.key_attrs)?;
    let gb = key_groups(b, &spec.key_attrs)?;
    let mut matches = Vec::new();
    let mut joined_rows = Vec::new();
    let mut total: u64 = 0;
    for (tuple, left_rows) in ga {
        let Some(right_rows) = gb.get(&tuple) else {
            continue;
        };
        for &l in &left_rows {
            for &r in right_rows {
                if joined_rows.len() < row_cap {
                    joined_rows.push((l, r));
                }
            }
        }
        total += left_rows.len() as u64 * right_rows.len() as u64;
        matches.push(KeyMatch {
            key: tuple,
            left_rows,
            right_rows: right_rows.clone(),
        });
    }
    Ok(JoinResult {
        spec: spec.clone(),
        truncated: total > joined_rows.len() as u64,
        matches,
        joined_rows,
        total_joined: total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisclosureKind {
    Identity,
    Attribute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RevealedAttribute {
    /// The side whose record supplies the value.
    pub from: Side,
    pub attr: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DisclosureCandidate {
    pub kind: DisclosureKind,
    pub key: Vec<String>,
    pub left_row: usize,
    pub right_row: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub revealed: Vec<RevealedAttribute>,
}

/// Sensitive or linking attributes of `source` that `target` lacks.
fn revealing_columns(
    source: &RecordTable,
    target: &RecordTable,
    dict: &QuasiIdentifierDictionary,
) -> Vec<(usize, String)> {
    source
        .attributes()
        .iter()
        .enumerate()
        .filter(|(_, a)| {
            matches!(
                dict.classify(&a.normalized_name),
                SemanticClass::Sensitive | SemanticClass::Linking
            ) && !target.has_attribute(&a.normalized_name)
        })
        .map(|(i, a)| (i, a.normalized_name.clone()))
        .collect()
}

/// Identity candidates for 1×1 matches; attribute candidates wherever one
/// side is unique and the other side contributes sensitive or linking
/// attributes the first dataset lacks. Identity candidates come first,
/// then key order.
pub fn detect_disclosures(
    result: &JoinResult,
    a: &RecordTable,
    b: &RecordTable,
    dict: &QuasiIdentifierDictionary,
) -> Vec<DisclosureCandidate> {
    let from_right = revealing_columns(b, a, dict);
    let from_left = revealing_columns(a, b, dict);
    let mut out = Vec::new();
    for m in &result.matches {
        let left_unique = m.left_rows.len() == 1;
        let right_unique = m.right_rows.len() == 1;
        if left_unique && right_unique {
            out.push(DisclosureCandidate {
                kind: DisclosureKind::Identity,
                key: m.key.clone(),
                left_row: m.left_rows[0],
                right_row: m.right_rows[0],
                revealed: Vec::new(),
            });
        }
        if !left_unique && !right_unique {
            continue;
        }
        for &l in &m.left_rows {
            for &r in &m.right_rows {
                let mut revealed = Vec::new();
                if left_unique {
                    revealed.extend(from_right.iter().map(|(c, name)| RevealedAttribute {
                        from: Side::Right,
                        attr: name.clone(),
                        value: b.cell(r, *c).to_string(),
                    }));
                }
                if right_unique {
                    revealed.extend(from_left.iter().map(|(c, name)| RevealedAttribute {
                        from: Side::Left,
                        attr: name.clone(),
                        value: a.cell(l, *c).to_string(),
                    }));
                }
                if !revealed.is_empty() {
                    out.push(DisclosureCandidate {
                        kind: DisclosureKind::Attribute,
                        key: m.key.clone(),
                        left_row: l,
                        right_row: r,
                        revealed,
                    });
                }
            }
        }
    }
    out.sort_by(|x, y| {
        x.kind
            .cmp(&y.kind)
            .then_with(|| x.key.cmp(&y.key))
            .then_with(|| (x.left_row, x.right_row).cmp(&(y.left_row, y.right_row)))
    });
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitiveCandidate {
    pub endpoint_a: String,
    pub endpoint_c: String,
    pub bridge_b: String,
    pub key_ab: Vec<String>,
    pub key_bc: Vec<String>,
    pub hop_scores: [JoinabilityScore; 2],
}

/// Pairs `(a, c)` with no shared quasi-identifier that a single bridge `b`
/// links, both hops sharing quasi-identifiers and scoring at least
/// `min_risk` on their automatic keys.
pub fn transitive_candidates(
    collection: &[TableRef<'_>],
    dict: &QuasiIdentifierDictionary,
    min_risk: f64,
    max_attrs: usize,
    cancel: Option<&CancelToken>,
) -> Result<Vec<TransitiveCandidate>> {
    if collection.len() < 3 {
        return Ok(Vec::new());
    }
    let mut members: Vec<TableRef<'_>> = collection.to_vec();
    members.sort_by(|x, y| x.id.cmp(y.id));
    members.dedup_by(|x, y| x.id == y.id);
    let n = members.len();
    let shares_qi = |i: usize, j: usize| {
        !shared_quasi_identifiers(members[i].table.attributes(), members[j].table.attributes(), dict)
            .is_empty()
    };
    type Hop = Option<(Vec<String>, JoinabilityScore)>;
    let mut hop_cache: BTreeMap<(usize, usize), Hop> = BTreeMap::new();
    let mut hop = |i: usize, j: usize| -> Result<Hop> {
        if let Some(h) = hop_cache.get(&(i, j)) {
            return Ok(h.clone());
        }
        let h = if shares_qi(i, j) {
            let key = auto_join_key(members[i].table, members[j].table, dict, max_attrs)?;
            let score = joinability_risk(members[i].table, members[j].table, &key)?;
            (score.risk >= min_risk).then_some((key, score))
        } else {
            None
        };
        hop_cache.insert((i, j), h.clone());
        Ok(h)
    };
    let mut out = Vec::new();
    for a in 0..n {
        for c in (a + 1)..n {
            if shares_qi(a, c) {
                continue;
            }
            for b in 0..n {
                if b == a || b == c {
                    continue;
                }
                cancel::check(cancel)?;
                let Some((key_ab, s_ab)) = hop(a, b)? else { continue };
                let Some((key_bc, s_bc)) = hop(b, c)? else { continue };
                out.push(TransitiveCandidate {
                    endpoint_a: members[a].id.to_string(),
                    endpoint_c: members[c].id.to_string(),
                    bridge_b: members[b].id.to_string(),
                    key_ab,
                    key_bc,
                    hop_scores: [s_ab, s_bc],
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSuggestion {
    pub attr: String,
    pub separation_gain: f64,
    pub overconstraining: bool,
    pub matches_after: usize,
    pub joined_after: u64,
}

/// Re-joins with each unused shared attribute appended to the key and
/// reports how much the mean match multiplicity drops. Attributes that
/// empty the result sort last, flagged `overconstraining`.
pub fn suggest_features<S: AsRef<str>>(
    result: &JoinResult,
    unused_shared: &[S],
    a: &RecordTable,
    b: &RecordTable,
) -> Result<Vec<FeatureSuggestion>> {
    if result.is_empty() {
        return Ok(Vec::new());
    }
    let before = result.mean_multiplicity();
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for attr in unused_shared {
        let attr = normalize_attribute(attr.as_ref());
        if result.spec.key_attrs.contains(&attr) || !seen.insert(attr.clone()) {
            continue;
        }
        let mut key = result.spec.key_attrs.clone();
        key.push(attr.clone());
        let spec = JoinSpec::new(&result.spec.left_id, &result.spec.right_id, &key, a, b)?;
        let after = execute_join(a, b, &spec, 0)?;
        let overconstraining = after.is_empty();
        let gain = if overconstraining {
            0.0
        } else {
            ((before - after.mean_multiplicity()) / before).clamp(0.0, 1.0)
        };
        out.push(FeatureSuggestion {
            attr,
            separation_gain: gain,
            overconstraining,
            matches_after: after.matches.len(),
            joined_after: after.total_joined,
        });
    }
    out.sort_by(|x, y| {
        x.overconstraining
            .cmp(&y.overconstraining)
            .then_with(|| y.separation_gain.total_cmp(&x.separation_gain))
            .then_with(|| x.attr.cmp(&y.attr))
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dict() -> QuasiIdentifierDictionary {
        QuasiIdentifierDictionary::builtin()
    }

    fn table(header: &[&str], rows: &[&[&str]]) -> RecordTable {
        RecordTable::from_rows(
            header,
            rows.iter().map(|r| r.iter().map(|c| c.to_string()).collect::<Vec<_>>()),
            &dict(),
        )
        .unwrap()
    }

    fn spec(key: &[&str], a: &RecordTable, b: &RecordTable) -> JoinSpec {
        JoinSpec::new("a", "b", key, a, b).unwrap()
    }

    #[test]
    fn shared_attribute_sets() {
        let a = table(&["age", "race", "sex", "neighborhoodxy", "x"], &[]);
        let b = table(&["age", "race", "sex", "neighborhoodxy", "y"], &[]);
        let s = shared_attributes(a.attributes(), b.attributes());
        assert_eq!(s.len(), 4);
        assert!(s.contains("neighborhoodxy"));
        let c = table(&["q"], &[]);
        assert!(shared_attributes(a.attributes(), c.attributes()).is_empty());
    }

    #[test]
    fn auto_key_prefers_quasi_identifiers() {
        // age: 8 values (3 bits), notes: 64 values (6 bits), sex: 2 values (1 bit)
        let rows: Vec<Vec<String>> = (0..64)
            .map(|i| vec![format!("{}", i % 8), format!("n{i}"), ["F", "M"][i % 2].to_string()])
            .collect();
        let a = RecordTable::from_rows(&["age", "notes", "sex"], rows.clone(), &dict()).unwrap();
        let b = RecordTable::from_rows(&["age", "notes", "sex"], rows, &dict()).unwrap();
        assert_eq!(auto_join_key(&a, &b, &dict(), 2).unwrap(), ["age", "sex"]);

        let a = table(&["case id", "x"], &[&["1", "a"]]);
        let b = table(&["case id", "y"], &[&["1", "b"]]);
        assert_eq!(auto_join_key(&a, &b, &dict(), 4).unwrap(), ["case id"]);

        let c = table(&["z"], &[&["1"]]);
        assert_eq!(auto_join_key(&a, &c, &dict(), 4).unwrap_err().code(), "NoSharedAttributes");
    }

    #[test]
    fn containment_values() {
        let a = table(&["k"], &[&["x"], &["y"], &["z"]]);
        let b = table(&["k"], &[&["y"], &["z"], &["w"], &["v"]]);
        assert!((containment(&a, &b, &["k"]).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(containment(&a, &a, &["k"]).unwrap(), 1.0);
        let c = table(&["k"], &[&["q"]]);
        assert_eq!(containment(&a, &c, &["k"]).unwrap(), 0.0);
        let empty = table(&["k"], &[]);
        assert_eq!(containment(&a, &empty, &["k"]).unwrap(), 0.0);
        assert_eq!(containment(&a, &b, &["nope"]).unwrap_err().code(), "UnknownAttribute");
    }

    #[test]
    fn risk_values() {
        let a = table(&["k"], &[&["x"], &["y"]]);
        let s = joinability_risk(&a, &a, &["k"]).unwrap();
        assert_eq!(s.risk, 1.0);
        let c = table(&["k"], &[&["q"]]);
        assert_eq!(joinability_risk(&a, &c, &["k"]).unwrap().risk, 0.0);
        let dup = table(&["k"], &[&["x"], &["x"], &["y"]]);
        let s = joinability_risk(&a, &dup, &["k"]).unwrap();
        assert_eq!(s.containment, 1.0);
        assert_eq!(s.unique_match_fraction, 0.5);
        assert_eq!(s.risk, 0.5);
    }

    #[test]
    fn empty_keys_never_match() {
        let a = table(&["k"], &[&[""], &["x"]]);
        let b = table(&["k"], &[&[" "], &["x"]]);
        let r = execute_join(&a, &b, &spec(&["k"], &a, &b), 100).unwrap();
        assert_eq!(r.matches.len(), 1);
        assert_eq!(r.joined_rows, [(1, 1)]);
    }

    #[test]
    fn join_basics_and_cap() {
        let a = table(&["k", "v"], &[&["1", "a"], &["2", "b"], &["2", "c"]]);
        let b = table(&["k", "w"], &[&["1", "x"], &["2", "y"], &["2", "z"], &["3", "q"]]);
        let r = execute_join(&a, &b, &spec(&["k"], &a, &b), 100).unwrap();
        assert_eq!(r.total_joined, 5);
        assert_eq!(r.joined_rows.len(), 5);
        assert!(!r.truncated);
        r.check_complete().unwrap();
        let capped = execute_join(&a, &b, &spec(&["k"], &a, &b), 2).unwrap();
        assert!(capped.truncated);
        assert_eq!(capped.joined_rows.len(), 2);
        assert_eq!(capped.matches, r.matches);
        assert_eq!(capped.check_complete().unwrap_err().code(), "ResultTooLarge");

        let c = table(&["k"], &[&["9"]]);
        assert!(execute_join(&a, &c, &spec(&["k"], &a, &c), 10).unwrap().is_empty());
        assert!(JoinSpec::new("a", "b", &["k", "k"], &a, &b).is_err());
        assert_eq!(JoinSpec::new("a", "b", &["v"], &a, &b).unwrap_err().code(), "UnknownAttribute");
    }

    #[test]
    fn disclosures_identity_and_attribute() {
        let a = table(&["age", "sex", "location"], &[&["24", "M", "wp"], &["30", "F", "x"], &["30", "F", "x"]]);
        let b = table(
            &["age", "sex", "location", "arrest charge"],
            &[&["24", "M", "wp", "trespass"], &["30", "F", "x", "theft"]],
        );
        let r = execute_join(&a, &b, &spec(&["age", "sex", "location"], &a, &b), 100).unwrap();
        let d = detect_disclosures(&r, &a, &b, &dict());
        assert_eq!(d[0].kind, DisclosureKind::Identity);
        assert_eq!(d[0].key, ["24", "M", "wp"]);
        let attrs: Vec<_> = d.iter().filter(|c| c.kind == DisclosureKind::Attribute).collect();
        // 24/M is unique both ways; 30/F is unique on the right only, which
        // reveals nothing new about the left side's individuals.
        assert_eq!(attrs.len(), 1);
        assert_eq!(attrs[0].revealed[0].attr, "arrest charge");
        assert_eq!(attrs[0].revealed[0].value, "trespass");
    }

    #[test]
    fn no_disclosures_when_everything_repeats() {
        let a = table(&["k", "charge"], &[&["1", "a"], &["1", "b"]]);
        let b = table(&["k", "offense"], &[&["1", "c"], &["1", "d"]]);
        let r = execute_join(&a, &b, &spec(&["k"], &a, &b), 100).unwrap();
        assert!(detect_disclosures(&r, &a, &b, &dict()).is_empty());
    }

    #[test]
    fn pair_counts() {
        assert_eq!(pair_count(8), 28);
        assert_eq!(pair_count(426), 90_525);
        assert_eq!(pair_count(2), 1);
        assert_eq!(pair_count(1), 0);
    }

    #[test]
    fn rank_pairs_counts_and_errors() {
        let t = table(&["age", "sex"], &[&["1", "F"]]);
        let u = table(&["q"], &[&["1"]]);
        let refs = [TableRef::new("a", &t), TableRef::new("b", &t), TableRef::new("c", &u)];
        let ranked = rank_pairs(&refs, &dict(), 4, None).unwrap();
        assert_eq!(ranked.len(), 3);
        assert_eq!((ranked[0].left.as_str(), ranked[0].right.as_str()), ("a", "b"));
        assert!(ranked.iter().any(|p| p.spec.is_none()));
        assert_eq!(
            rank_pairs(&refs[..1], &dict(), 4, None).unwrap_err().code(),
            "InsufficientMembers"
        );
        let token = CancelToken::new();
        token.cancel();
        assert_eq!(rank_pairs(&refs, &dict(), 4, Some(&token)).unwrap_err().code(), "Cancelled");
    }

    #[test]
    fn transitive_bridge() {
        let a = table(&["age", "sex"], &[&["1", "F"], &["2", "M"]]);
        let b = table(&["age", "sex", "zip"], &[&["1", "F", "07102"], &["2", "M", "07103"]]);
        let c = table(&["zip", "income"], &[&["07102", "10"], &["07103", "20"]]);
        let refs = [TableRef::new("A", &a), TableRef::new("B", &b), TableRef::new("C", &c)];
        let found = transitive_candidates(&refs, &dict(), 0.2, 4, None).unwrap();
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].bridge_b, "B");
        assert_eq!((found[0].endpoint_a.as_str(), found[0].endpoint_c.as_str()), ("A", "C"));
        assert!(transitive_candidates(&refs[..2], &dict(), 0.2, 4, None).unwrap().is_empty());

        let x = table(&["age"], &[&["1"]]);
        let y = table(&["race"], &[&["1"]]);
        let z = table(&["sex"], &[&["1"]]);
        let refs = [TableRef::new("x", &x), TableRef::new("y", &y), TableRef::new("z", &z)];
        assert!(transitive_candidates(&refs, &dict(), 0.0, 4, None).unwrap().is_empty());
    }

    #[test]
    fn feature_suggestions() {
        // Ten left rows share one key with one right row; only one also
        // agrees on "disposition".
        let mut left = vec![];
        for i in 0..10 {
            left.push(vec!["k".to_string(), format!("d{i}"), "const".to_string()]);
        }
        let a = RecordTable::from_rows(&["key", "disposition", "flag"], left, &dict()).unwrap();
        let b = table(&["key", "disposition", "flag"], &[&["k", "d3", "const"]]);
        let r = execute_join(&a, &b, &spec(&["key"], &a, &b), 100).unwrap();
        assert_eq!(r.total_joined, 10);
        let s = suggest_features(&r, &["flag", "disposition"], &a, &b).unwrap();
        assert_eq!(s[0].attr, "disposition");
        assert!((s[0].separation_gain - 0.9).abs() < 1e-12);
        assert_eq!(s[1].attr, "flag");
        assert_eq!(s[1].separation_gain, 0.0);

        let c = table(&["key", "disposition"], &[&["k", "zzz"]]);
        let a2 = table(&["key", "disposition"], &[&["k", "d1"]]);
        let r = execute_join(&a2, &c, &spec(&["key"], &a2, &c), 100).unwrap();
        let s = suggest_features(&r, &["disposition"], &a2, &c).unwrap();
        assert!(s[0].overconstraining);
    }

    fn arb_pair() -> impl Strategy<Value = (RecordTable, RecordTable)> {
        let side = |n: usize| {
            proptest::collection::vec(proptest::collection::vec(0u8..3, 3), 0..n).prop_map(|rows| {
                RecordTable::from_rows(
                    &["k1", "k2", "k3"],
                    rows.into_iter()
                        .map(|r| r.into_iter().map(|v| if v == 0 { String::new() } else { format!("v{v}") }).collect::<Vec<_>>()),
                    &QuasiIdentifierDictionary::builtin(),
                )
                .unwrap()
            })
        };
        (side(25), side(25))
    }

    proptest! {
        #[test]
        fn join_invariants((a, b) in arb_pair()) {
            let s1 = JoinSpec::new("a", "b", &["k1"], &a, &b).unwrap();
            let r = execute_join(&a, &b, &s1, usize::MAX).unwrap();
            let sum: u64 = r.matches.iter().map(KeyMatch::multiplicity).sum();
            prop_assert_eq!(r.joined_rows.len() as u64, sum);

            let s_rev = JoinSpec::new("b", "a", &["k1"], &b, &a).unwrap();
            let rev = execute_join(&b, &a, &s_rev, usize::MAX).unwrap();
            let mut fwd: Vec<(usize, usize)> = r.joined_rows.clone();
            let mut back: Vec<(usize, usize)> = rev.joined_rows.iter().map(|&(x, y)| (y, x)).collect();
            fwd.sort();
            back.sort();
            prop_assert_eq!(fwd, back);

            let s2 = JoinSpec::new("a", "b", &["k1", "k2"], &a, &b).unwrap();
            let r2 = execute_join(&a, &b, &s2, usize::MAX).unwrap();
            // Row pairs matching on a longer key are a subset of those on a shorter one.
            let shorter: BTreeSet<(usize, usize)> = r.joined_rows.iter().copied().collect();
            prop_assert!(r2.joined_rows.iter().all(|p| shorter.contains(p)));
            prop_assert!(r2.total_joined <= r.total_joined);

            let score = joinability_risk(&a, &b, &["k1", "k2"]).unwrap();
            prop_assert!(score.risk <= score.containment + 1e-15);
            prop_assert!(score.containment <= 1.0);

            for c in detect_disclosures(&r, &a, &b, &QuasiIdentifierDictionary::builtin()) {
                if c.kind == DisclosureKind::Identity {
                    let ga = key_groups(&a, &s1.key_attrs).unwrap();
                    let gb = key_groups(&b, &s1.key_attrs).unwrap();
                    prop_assert_eq!(ga[&c.key].len(), 1);
                    prop_assert_eq!(gb[&c.key].len(), 1);
                }
            }
        }
    }
}
