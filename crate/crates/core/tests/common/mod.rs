//! Brute-force oracles and fixture helpers shared by the integration tests.
//! The oracles deliberately avoid the grouping and hashing the engine uses:
//! they compare rows pairwise.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::Rng;
use riskcal_core::catalog::{harvest_all, FixtureSource};
use riskcal_core::cluster::DatasetAttributes;
use riskcal_core::curation::{read_label_file, CollectionManifest, DEFAULT_MIN_QI};
use riskcal_core::join::{DisclosureCandidate, DisclosureKind, RevealedAttribute, Side};
use riskcal_core::{QuasiIdentifierDictionary, RecordTable, SemanticClass};

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn scenario_path(name: &str) -> PathBuf {
    fixtures_dir().join("scenarios").join(name)
}

pub fn scenario(name: &str) -> RecordTable {
    RecordTable::from_csv_path(&scenario_path(name), &QuasiIdentifierDictionary::builtin())
        .unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Harvests the fixture corpus, applies the committed labels and saves the
/// manifest (plus `funnel.json`) under `dir`. Returns the manifest path.
pub fn build_fixture_manifest(dir: &Path) -> PathBuf {
    let dict = QuasiIdentifierDictionary::builtin();
    let source = FixtureSource::new(&fixtures_dir());
    let all = harvest_all(&source, &dict).unwrap();
    let manifest = CollectionManifest::from_harvest(&all, &dict, DEFAULT_MIN_QI).unwrap();
    let labels = read_label_file(&fixtures_dir().join("labels.json")).unwrap();
    let mut manifest = manifest.apply_labels(&labels).unwrap();
    manifest.build_collection(false).unwrap();
    let path = dir.join("collection.jsonl");
    manifest.save(&path).unwrap();
    path
}

pub fn table(header: &[&str], rows: Vec<Vec<String>>) -> RecordTable {
    RecordTable::from_rows(header, rows, &QuasiIdentifierDictionary::builtin()).unwrap()
}

/// Random table with `rows` rows over `header`, cells drawn from an
/// alphabet of `alphabet` values per column (index 0 may be the empty
/// string when `allow_empty`).
pub fn random_table<R: Rng>(
    rng: &mut R,
    header: &[&str],
    rows: usize,
    alphabet: usize,
    allow_empty: bool,
) -> RecordTable {
    let data = (0..rows)
        .map(|_| {
            header
                .iter()
                .map(|_| {
                    let v = rng.gen_range(0..alphabet.max(1));
                    if allow_empty && v == 0 {
                        String::new()
                    } else {
                        format!("v{v}")
                    }
                })
                .collect()
        })
        .collect();
    table(header, data)
}

fn cols(t: &RecordTable, attrs: &[String]) -> Vec<usize> {
    attrs.iter().map(|a| t.column_index(a).unwrap()).collect()
}

fn same_key(t: &RecordTable, i: usize, j: usize, c: &[usize]) -> bool {
    c.iter().all(|&x| t.cell(i, x) == t.cell(j, x))
}

/// Minimum over rows of the number of rows sharing that row's key.
pub fn oracle_k(t: &RecordTable, key: &[String]) -> usize {
    let c = cols(t, key);
    (0..t.len())
        .map(|i| (0..t.len()).filter(|&j| same_key(t, i, j, &c)).count())
        .min()
        .unwrap()
}

pub fn oracle_l(t: &RecordTable, key: &[String], sensitive: &str) -> usize {
    let c = cols(t, key);
    let s = t.column_index(sensitive).unwrap();
    (0..t.len())
        .map(|i| {
            let mut seen: Vec<&str> = Vec::new();
            for j in 0..t.len() {
                if same_key(t, i, j, &c) && !seen.contains(&t.cell(j, s)) {
                    seen.push(t.cell(j, s));
                }
            }
            seen.len()
        })
        .min()
        .unwrap()
}

/// Maximum total-variation distance between a row's class distribution
/// and the table distribution, in plain floating point.
pub fn oracle_t(t: &RecordTable, key: &[String], sensitive: &str) -> f64 {
    let c = cols(t, key);
    let s = t.column_index(sensitive).unwrap();
    let n = t.len() as f64;
    let mut values: Vec<&str> = Vec::new();
    for r in 0..t.len() {
        if !values.contains(&t.cell(r, s)) {
            values.push(t.cell(r, s));
        }
    }
    let mut worst = 0.0f64;
    for i in 0..t.len() {
        let class: Vec<usize> = (0..t.len()).filter(|&j| same_key(t, i, j, &c)).collect();
        let m = class.len() as f64;
        let mut d = 0.0;
        for v in &values {
            let in_class = class.iter().filter(|&&j| t.cell(j, s) == *v).count() as f64;
            let overall = (0..t.len()).filter(|&j| t.cell(j, s) == *v).count() as f64;
            d += (in_class / m - overall / n).abs();
        }
        worst = worst.max(d / 2.0);
    }
    worst
}

/// Nested-loop inner join. Rows whose key has an empty cell never match.
pub fn oracle_join(a: &RecordTable, b: &RecordTable, key: &[String]) -> Vec<(usize, usize)> {
    let ca = cols(a, key);
    let cb = cols(b, key);
    let mut out = Vec::new();
    for i in 0..a.len() {
        if ca.iter().any(|&x| a.cell(i, x).is_empty()) {
            continue;
        }
        for j in 0..b.len() {
            if ca.iter().zip(&cb).all(|(&x, &y)| a.cell(i, x) == b.cell(j, y)) {
                out.push((i, j));
            }
        }
    }
    out
}

fn key_of(a: &RecordTable, i: usize, ca: &[usize]) -> Vec<String> {
    ca.iter().map(|&x| a.cell(i, x).to_string()).collect()
}

/// Key tuple → (left rows, right rows) derived from the nested-loop join.
pub fn oracle_matches(
    a: &RecordTable,
    b: &RecordTable,
    key: &[String],
) -> BTreeMap<Vec<String>, (BTreeSet<usize>, BTreeSet<usize>)> {
    let ca = cols(a, key);
    let mut out: BTreeMap<Vec<String>, (BTreeSet<usize>, BTreeSet<usize>)> = BTreeMap::new();
    for (i, j) in oracle_join(a, b, key) {
        let e = out.entry(key_of(a, i, &ca)).or_default();
        e.0.insert(i);
        e.1.insert(j);
    }
    out
}

fn revealing(src: &RecordTable, dst: &RecordTable, dict: &QuasiIdentifierDictionary) -> Vec<String> {
    src.attributes()
        .iter()
        .filter(|a| {
            matches!(
                dict.classify(&a.normalized_name),
                SemanticClass::Sensitive | SemanticClass::Linking
            ) && !dst
                .attributes()
                .iter()
                .any(|d| d.normalized_name == a.normalized_name)
        })
        .map(|a| a.normalized_name.clone())
        .collect()
}

/// Disclosure candidates recomputed from the nested-loop join.
pub fn oracle_disclosures(
    a: &RecordTable,
    b: &RecordTable,
    key: &[String],
    dict: &QuasiIdentifierDictionary,
) -> Vec<DisclosureCandidate> {
    let from_b = revealing(b, a, dict);
    let from_a = revealing(a, b, dict);
    let mut identity = Vec::new();
    let mut attribute = Vec::new();
    for (k, (ls, rs)) in oracle_matches(a, b, key) {
        if ls.len() == 1 && rs.len() == 1 {
            identity.push(DisclosureCandidate {
                kind: DisclosureKind::Identity,
                key: k.clone(),
                left_row: *ls.iter().next().unwrap(),
                right_row: *rs.iter().next().unwrap(),
                revealed: vec![],
            });
        }
        for &l in &ls {
            for &r in &rs {
                let mut revealed = Vec::new();
                if ls.len() == 1 {
                    for name in &from_b {
                        revealed.push(RevealedAttribute {
                            from: Side::Right,
                            attr: name.clone(),
                            value: b.cell(r, b.column_index(name).unwrap()).to_string(),
                        });
                    }
                }
                if rs.len() == 1 {
                    for name in &from_a {
                        revealed.push(RevealedAttribute {
                            from: Side::Left,
                            attr: name.clone(),
                            value: a.cell(l, a.column_index(name).unwrap()).to_string(),
                        });
                    }
                }
                if !revealed.is_empty() {
                    attribute.push(DisclosureCandidate {
                        kind: DisclosureKind::Attribute,
                        key: k.clone(),
                        left_row: l,
                        right_row: r,
                        revealed,
                    });
                }
            }
        }
    }
    identity.extend(attribute);
    identity
}

fn jaccard_distance(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    1.0 - a.intersection(b).count() as f64 / union as f64
}

/// Average-linkage clustering that recomputes every inter-cluster distance
/// from the original pairwise distances at each merge.
pub fn oracle_clusters(items: &[DatasetAttributes], cut: f64) -> Vec<Vec<String>> {
    let mut clusters: Vec<Vec<usize>> = (0..items.len()).map(|i| vec![i]).collect();
    let id = |c: &Vec<usize>| c.iter().map(|&i| items[i].id.clone()).min().unwrap();
    loop {
        let mut best: Option<(f64, String, String, usize, usize)> = None;
        for x in 0..clusters.len() {
            for y in 0..clusters.len() {
                if x == y {
                    continue;
                }
                let (ix, iy) = (id(&clusters[x]), id(&clusters[y]));
                if ix > iy {
                    continue;
                }
                let mut total = 0.0;
                for &p in &clusters[x] {
                    for &q in &clusters[y] {
                        total += jaccard_distance(&items[p].attrs, &items[q].attrs);
                    }
                }
                let d = total / (clusters[x].len() * clusters[y].len()) as f64;
                let better = match &best {
                    None => true,
                    Some((bd, bx, by, _, _)) => {
                        d < bd - 1e-12 || ((d - bd).abs() <= 1e-12 && (&ix, &iy) < (bx, by))
                    }
                };
                if better {
                    best = Some((d, ix, iy, x, y));
                }
            }
        }
        match best {
            Some((d, _, _, x, y)) if d <= cut + 1e-12 => {
                let merged = clusters[y].clone();
                clusters[x].extend(merged);
                clusters.remove(y);
            }
            _ => break,
        }
    }
    let mut out: Vec<Vec<String>> = clusters
        .iter()
        .map(|c| {
            let mut m: Vec<String> = c.iter().map(|&i| items[i].id.clone()).collect();
            m.sort();
            m
        })
        .collect();
    out.sort();
    out
}
