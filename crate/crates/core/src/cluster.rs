//! Average-linkage agglomerative clustering of datasets by the Jaccard
//! distance between their normalized attribute sets.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Result, RiskError};

pub const DEFAULT_DISTANCE_CUT: f64 = 0.6;
pub const EXTENDED_SIGNATURE_MIN_FRACTION: f64 = 0.75;

/// Distances closer than this are treated as ties.
const TIE_EPS: f64 = 1e-12;

/// Identifier plus attribute set of one collection member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetAttributes {
    pub id: String,
    pub attrs: BTreeSet<String>,
}

impl DatasetAttributes {
    pub fn new<I, S>(id: impl Into<String>, attrs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        DatasetAttributes {
            id: id.into(),
            attrs: attrs.into_iter().map(Into::into).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankScore {
    pub qi_overlap: usize,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetCluster {
    /// Smallest member id.
    pub id: String,
    pub members: Vec<String>,
    pub core_signature: BTreeSet<String>,
    pub extended_signature: BTreeMap<String, f64>,
    pub rank_score: RankScore,
}

/// `|a ∩ b| / |a ∪ b|`, and 1 for two empty sets.
pub fn attribute_jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

struct Working {
    id: String,
    members: Vec<usize>,
}

/// Merges the closest pair of clusters while their average-linkage
/// distance is at most `distance_cut`. Ties go to the lexicographically
/// smallest pair of cluster ids (a cluster's id is its smallest member).
#[allow(clippy::needless_range_loop)]
pub fn cluster_datasets(
    collection: &[DatasetAttributes],
    distance_cut: f64,
) -> Result<Vec<DatasetCluster>> {
    if collection.is_empty() {
        return Err(RiskError::EmptyCollection);
    }
    if !(distance_cut > 0.0 && distance_cut <= 1.0) {
        return Err(RiskError::InvalidParameter(format!(
            "distance cut {distance_cut} outside (0, 1]"
        )));
    }
    let mut seen = BTreeSet::new();
    for d in collection {
        if !seen.insert(d.id.as_str()) {
            return Err(RiskError::InvalidParameter(format!("duplicate dataset id {}", d.id)));
        }
    }

    let mut order: Vec<usize> = (0..collection.len()).collect();
    order.sort_by(|&a, &b| collection[a].id.cmp(&collection[b].id));
    let mut clusters: Vec<Working> = order
        .iter()
        .map(|&i| Working {
            id: collection[i].id.clone(),
            members: vec![i],
        })
        .collect();
    // dist[i][j] between working clusters i and j, updated by Lance–Williams.
    let mut dist: Vec<Vec<f64>> = clusters
        .iter()
        .map(|a| {
            clusters
                .iter()
                .map(|b| {
                    1.0 - attribute_jaccard(
                        &collection[a.members[0]].attrs,
                        &collection[b.members[0]].attrs,
                    )
                })
                .collect()
        })
        .collect();

    while clusters.len() > 1 {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..clusters.len() {
            for j in (i + 1)..clusters.len() {
                let d = dist[i][j];
                let better = match best {
                    None => true,
                    Some((bi, bj, bd)) => {
                        if d < bd - TIE_EPS {
                            true
                        } else if d <= bd + TIE_EPS {
                            pair_ids(&clusters, i, j) < pair_ids(&clusters, bi, bj)
                        } else {
                            false
                        }
                    }
                };
                if better {
                    best = Some((i, j, d));
                }
            }
        }
        let (i, j, d) = best.expect("at least two clusters");
        if d > distance_cut + TIE_EPS {
            break;
        }
        let (ni, nj) = (clusters[i].members.len() as f64, clusters[j].members.len() as f64);
        for k in 0..clusters.len() {
            if k == i || k == j {
                continue;
            }
            let merged = (ni * dist[i][k] + nj * dist[j][k]) / (ni + nj);
            dist[i][k] = merged;
            dist[k][i] = merged;
        }
        let absorbed = clusters.remove(j);
        dist.remove(j);
        for row in dist.iter_mut() {
            row.remove(j);
        }
        let target = &mut clusters[i];
        target.members.extend(absorbed.members);
        if absorbed.id < target.id {
            target.id = absorbed.id;
        }
    }

    Ok(clusters
        .into_iter()
        .map(|w| build_cluster(collection, w))
        .collect())
}

fn pair_ids(clusters: &[Working], i: usize, j: usize) -> (&str, &str) {
    let (a, b) = (clusters[i].id.as_str(), clusters[j].id.as_str());
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn build_cluster(collection: &[DatasetAttributes], w: Working) -> DatasetCluster {
    let mut members: Vec<String> = w.members.iter().map(|&i| collection[i].id.clone()).collect();
    members.sort();
    let sets: Vec<&BTreeSet<String>> = w.members.iter().map(|&i| &collection[i].attrs).collect();
    let mut core = sets[0].clone();
    for s in &sets[1..] {
        core = core.intersection(s).cloned().collect();
    }
    let mut presence: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &sets {
        for a in s.iter() {
            *presence.entry(a.as_str()).or_insert(0) += 1;
        }
    }
    let n = sets.len() as f64;
    let extended = presence
        .into_iter()
        .map(|(a, c)| (a.to_string(), c as f64 / n))
        .filter(|(_, f)| *f >= EXTENDED_SIGNATURE_MIN_FRACTION)
        .collect();
    DatasetCluster {
        id: w.id,
        rank_score: RankScore {
            qi_overlap: 0,
            size: members.len(),
        },
        members,
        core_signature: core,
        extended_signature: extended,
    }
}

/// Orders clusters by how many selected quasi-identifiers their core
/// signature holds, then by size, then by smallest member id.
pub fn rank_clusters<S: AsRef<str>>(
    clusters: Vec<DatasetCluster>,
    selected_qis: &[S],
) -> Vec<DatasetCluster> {
    let selected: BTreeSet<&str> = selected_qis.iter().map(|s| s.as_ref()).collect();
    let mut ranked: Vec<DatasetCluster> = clusters
        .into_iter()
        .map(|mut c| {
            c.rank_score = RankScore {
                qi_overlap: c
                    .core_signature
                    .iter()
                    .filter(|a| selected.contains(a.as_str()))
                    .count(),
                size: c.members.len(),
            };
            c
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.rank_score
            .qi_overlap
            .cmp(&a.rank_score.qi_overlap)
            .then_with(|| b.rank_score.size.cmp(&a.rank_score.size))
            .then_with(|| a.members[0].cmp(&b.members[0]))
    });
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn jaccard_values() {
        assert_eq!(attribute_jaccard(&set(&["a", "b"]), &set(&["a", "b"])), 1.0);
        assert_eq!(attribute_jaccard(&set(&["a"]), &set(&["b"])), 0.0);
        assert_eq!(
            attribute_jaccard(&set(&["age", "sex", "race"]), &set(&["age", "sex", "zip"])),
            0.5
        );
        assert_eq!(attribute_jaccard(&set(&[]), &set(&[])), 1.0);
    }

    #[test]
    fn identical_sets_merge_disjoint_do_not() {
        let c = cluster_datasets(
            &[
                DatasetAttributes::new("a", ["x", "y"]),
                DatasetAttributes::new("b", ["x", "y"]),
            ],
            0.6,
        )
        .unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].members, ["a", "b"]);
        assert_eq!(c[0].core_signature, set(&["x", "y"]));

        let c = cluster_datasets(
            &[
                DatasetAttributes::new("a", ["x"]),
                DatasetAttributes::new("b", ["y"]),
                DatasetAttributes::new("c", ["z"]),
            ],
            0.6,
        )
        .unwrap();
        assert_eq!(c.len(), 3);
    }

    #[test]
    fn errors() {
        assert_eq!(cluster_datasets(&[], 0.6).unwrap_err().code(), "EmptyCollection");
        let one = [DatasetAttributes::new("a", ["x"])];
        assert!(cluster_datasets(&one, 0.0).is_err());
        assert!(cluster_datasets(&one, 1.5).is_err());
    }

    #[test]
    fn signatures() {
        let c = cluster_datasets(
            &[
                DatasetAttributes::new("a", ["x", "y", "z", "w"]),
                DatasetAttributes::new("b", ["x", "y", "z", "w"]),
                DatasetAttributes::new("c", ["x", "y", "z", "w"]),
                DatasetAttributes::new("d", ["x", "y", "z"]),
            ],
            0.6,
        )
        .unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].core_signature, set(&["x", "y", "z"]));
        assert_eq!(c[0].extended_signature["w"], 0.75);
        assert_eq!(c[0].extended_signature.len(), 4);
    }

    #[test]
    fn ranking_rules() {
        let mk = |id: &str, core: &[&str], size: usize| DatasetCluster {
            id: id.into(),
            members: (0..size).map(|i| format!("{id}{i}")).collect(),
            core_signature: set(core),
            extended_signature: BTreeMap::new(),
            rank_score: RankScore::default(),
        };
        let ranked = rank_clusters(
            vec![mk("b", &["age", "sex"], 2), mk("a", &["age", "sex", "race", "zip"], 2)],
            &["age", "sex", "race", "zip"],
        );
        assert_eq!(ranked[0].id, "a");
        assert_eq!(ranked[0].rank_score.qi_overlap, 4);

        let ranked = rank_clusters(vec![mk("s", &["age"], 3), mk("l", &["age"], 8)], &["age"]);
        assert_eq!(ranked[0].members.len(), 8);

        let none: [&str; 0] = [];
        let ranked = rank_clusters(vec![mk("b", &[], 1), mk("a", &[], 1), mk("c", &[], 2)], &none);
        let ids: Vec<_> = ranked.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, ["c", "a", "b"]);
    }

    fn arb_collection() -> impl Strategy<Value = Vec<DatasetAttributes>> {
        proptest::collection::vec(proptest::collection::btree_set(0u8..8, 0..6), 1..10).prop_map(
            |sets| {
                sets.into_iter()
                    .enumerate()
                    .map(|(i, s)| DatasetAttributes::new(format!("d{i:02}"), s.into_iter().map(|a| format!("a{a}"))))
                    .collect()
            },
        )
    }

    proptest! {
        #[test]
        fn jaccard_symmetric(a in proptest::collection::btree_set(0u8..10, 0..6), b in proptest::collection::btree_set(0u8..10, 0..6)) {
            prop_assert_eq!(attribute_jaccard(&a, &b), attribute_jaccard(&b, &a));
            prop_assert_eq!(attribute_jaccard(&a, &a), 1.0);
        }

        #[test]
        fn clustering_is_a_partition(coll in arb_collection(), cut in 0.05f64..1.0) {
            let clusters = cluster_datasets(&coll, cut).unwrap();
            let mut all: Vec<String> = clusters.iter().flat_map(|c| c.members.clone()).collect();
            all.sort();
            let mut expected: Vec<String> = coll.iter().map(|d| d.id.clone()).collect();
            expected.sort();
            prop_assert_eq!(all, expected);
            for c in &clusters {
                for m in &c.members {
                    let attrs = &coll.iter().find(|d| &d.id == m).unwrap().attrs;
                    prop_assert!(c.core_signature.is_subset(attrs));
                }
            }
        }

        #[test]
        fn lower_cut_refines(coll in arb_collection(), lo in 0.05f64..1.0, hi in 0.05f64..1.0) {
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            let fine = cluster_datasets(&coll, lo).unwrap();
            let coarse = cluster_datasets(&coll, hi).unwrap();
            for f in &fine {
                prop_assert!(coarse.iter().any(|c| f.members.iter().all(|m| c.members.contains(m))));
            }
        }

        #[test]
        fn ranking_is_a_permutation(coll in arb_collection(), qis in proptest::collection::vec(0u8..8, 0..4)) {
            let clusters = cluster_datasets(&coll, 0.6).unwrap();
            let sel: Vec<String> = qis.iter().map(|q| format!("a{q}")).collect();
            let mut before: Vec<String> = clusters.iter().map(|c| c.id.clone()).collect();
            let mut after: Vec<String> = rank_clusters(clusters, &sel).iter().map(|c| c.id.clone()).collect();
            before.sort();
            after.sort();
            prop_assert_eq!(before, after);
        }
    }
}
