//! The curation funnel: all resources → tabular datasets → datasets with a
//! combination of quasi-identifiers → human-subject datasets labeled by a
//! person.
//!
//! A [`CollectionManifest`] is persisted as `collection.jsonl` (one entry
//! per line) with stage counts in a sibling `funnel.json`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::catalog::{DatasetKey, DatasetMetadata, ResourceKind};
use crate::error::{Result, RiskError};
use crate::qi::{QuasiIdentifierDictionary, SemanticClass};

pub const DEFAULT_MIN_QI: usize = 2;
pub const FUNNEL_FILE: &str = "funnel.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relevance {
    HumanSubject,
    NonHuman,
    Undecided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    IndividualRecord,
    Aggregate,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurationLabel {
    pub relevance: Relevance,
    pub granularity: Granularity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub labeled_at: DateTime<Utc>,
}

impl CurationLabel {
    pub fn new(relevance: Relevance, granularity: Granularity, labeled_at: DateTime<Utc>) -> Self {
        CurationLabel {
            relevance,
            granularity,
            note: None,
            labeled_at,
        }
    }

    pub fn undecided(at: DateTime<Utc>) -> Self {
        CurationLabel::new(Relevance::Undecided, Granularity::Unknown, at)
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    fn same_decision(&self, other: &CurationLabel) -> bool {
        self.relevance == other.relevance
            && self.granularity == other.granularity
            && self.note == other.note
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub key: DatasetKey,
    pub metadata: DatasetMetadata,
    pub qi_hits: Vec<String>,
    pub label: CurationLabel,
    /// Superseded labels, oldest first.
    #[serde(default)]
    pub history: Vec<CurationLabel>,
}

/// Stage counts in funnel order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub resources: u64,
    pub tabular: u64,
    pub qi_filtered: u64,
    pub curated: u64,
}

impl StageCounts {
    pub const NAMES: [&'static str; 4] = ["resources", "tabular", "qi-filtered", "curated"];

    pub fn ordered(&self) -> [u64; 4] {
        [self.resources, self.tabular, self.qi_filtered, self.curated]
    }

    pub fn is_monotone(&self) -> bool {
        self.ordered().windows(2).all(|w| w[0] >= w[1])
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CollectionManifest {
    pub entries: BTreeMap<DatasetKey, ManifestEntry>,
    pub stage_counts: StageCounts,
}

/// Keeps `dataset` resources that describe at least one attribute.
pub fn filter_tabular(metadata: &[DatasetMetadata]) -> Vec<DatasetMetadata> {
    metadata
        .iter()
        .filter(|m| m.resource_kind == ResourceKind::Dataset && !m.attributes.is_empty())
        .cloned()
        .collect()
}

/// Normalized attribute names of `meta` that the dictionary classifies as
/// quasi-identifiers, one per canonical term.
pub fn qi_hits(meta: &DatasetMetadata, dict: &QuasiIdentifierDictionary) -> Vec<String> {
    let mut canon = BTreeSet::new();
    meta.attributes
        .iter()
        .filter(|a| dict.classify(&a.normalized_name) == SemanticClass::QuasiIdentifier)
        .filter(|a| canon.insert(dict.resolve(&a.normalized_name).to_string()))
        .map(|a| a.normalized_name.clone())
        .collect()
}

/// Keeps datasets carrying at least `min_qi` distinct quasi-identifiers.
pub fn filter_by_qi(
    datasets: &[DatasetMetadata],
    dict: &QuasiIdentifierDictionary,
    min_qi: usize,
) -> Result<Vec<(DatasetMetadata, Vec<String>)>> {
    if min_qi == 0 {
        return Err(RiskError::InvalidParameter("min_qi must be at least 1".into()));
    }
    Ok(datasets
        .iter()
        .filter_map(|m| {
            let hits = qi_hits(m, dict);
            (hits.len() >= min_qi).then(|| (m.clone(), hits))
        })
        .collect())
}

/// One line of a batch label file: a JSON array of these.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub dataset: DatasetKey,
    pub relevance: Relevance,
    pub granularity: Granularity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub labeled_at: DateTime<Utc>,
}

impl LabelRecord {
    pub fn label(&self) -> CurationLabel {
        CurationLabel {
            relevance: self.relevance,
            granularity: self.granularity,
            note: self.note.clone(),
            labeled_at: self.labeled_at,
        }
    }
}

pub fn read_label_file(path: &Path) -> Result<Vec<LabelRecord>> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCount {
    pub stage: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GranularitySplit {
    pub individual: u64,
    pub aggregate: u64,
}

/// Funnel stage counts plus the granularity split of the curated stage.
/// Serialized form is the `funnel.json` sidecar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunnelReport {
    pub stages: Vec<StageCount>,
    pub granularity: GranularitySplit,
}

impl FunnelReport {
    pub fn from_counts(counts: StageCounts, individual: u64, aggregate: u64) -> Self {
        FunnelReport {
            stages: StageCounts::NAMES
                .iter()
                .zip(counts.ordered())
                .map(|(n, c)| StageCount {
                    stage: n.to_string(),
                    count: c,
                })
                .collect(),
            granularity: GranularitySplit {
                individual,
                aggregate,
            },
        }
    }

    pub fn counts(&self) -> StageCounts {
        let get = |name: &str| {
            self.stages
                .iter()
                .find(|s| s.stage == name)
                .map(|s| s.count)
                .unwrap_or(0)
        };
        StageCounts {
            resources: get("resources"),
            tabular: get("tabular"),
            qi_filtered: get("qi-filtered"),
            curated: get("curated"),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// `216000 → 39507 → 5404 → 426 (151/275)`
    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for FunnelReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let chain: Vec<String> = self.stages.iter().map(|s| s.count.to_string()).collect();
        write!(
            f,
            "{} ({}/{})",
            chain.join(" → "),
            self.granularity.individual,
            self.granularity.aggregate
        )
    }
}

impl CollectionManifest {
    /// Runs the automatic stages over a full harvest. Every qi-filtered
    /// dataset enters the manifest as undecided.
    pub fn from_harvest(
        all: &[DatasetMetadata],
        dict: &QuasiIdentifierDictionary,
        min_qi: usize,
    ) -> Result<Self> {
        let tabular = filter_tabular(all);
        let filtered = filter_by_qi(&tabular, dict, min_qi)?;
        let mut entries = BTreeMap::new();
        for (meta, hits) in filtered {
            let key = meta.key();
            if entries.contains_key(&key) {
                return Err(RiskError::MalformedCatalog(format!("duplicate dataset {key}")));
            }
            let label = CurationLabel::undecided(meta.fetched_at);
            entries.insert(
                key.clone(),
                ManifestEntry {
                    key,
                    metadata: meta,
                    qi_hits: hits,
                    label,
                    history: Vec::new(),
                },
            );
        }
        let stage_counts = StageCounts {
            resources: all.len() as u64,
            tabular: tabular.len() as u64,
            qi_filtered: entries.len() as u64,
            curated: 0,
        };
        Ok(CollectionManifest {
            entries,
            stage_counts,
        })
    }

    /// Carries labels and label history over from an earlier manifest for
    /// datasets present in both.
    pub fn carry_labels_from(&mut self, previous: &CollectionManifest) {
        for (key, entry) in self.entries.iter_mut() {
            if let Some(old) = previous.entries.get(key) {
                entry.label = old.label.clone();
                entry.history = old.history.clone();
            }
        }
        self.stage_counts.curated = self.curated_count();
    }

    pub fn get(&self, key: &DatasetKey) -> Result<&ManifestEntry> {
        self.entries
            .get(key)
            .ok_or_else(|| RiskError::UnknownDataset(key.to_string()))
    }

    /// Looks an entry up by `portal:id` or by exact title.
    pub fn find(&self, id_or_title: &str) -> Result<&ManifestEntry> {
        if let Ok(k) = id_or_title.parse::<DatasetKey>() {
            if let Some(e) = self.entries.get(&k) {
                return Ok(e);
            }
        }
        self.entries
            .values()
            .find(|e| e.metadata.title == id_or_title)
            .ok_or_else(|| RiskError::UnknownDataset(id_or_title.to_string()))
    }

    /// Returns a manifest with `label` applied; the replaced label moves
    /// into history. Re-applying the current decision is a no-op.
    pub fn label_dataset(&self, key: &DatasetKey, label: CurationLabel) -> Result<Self> {
        if label.relevance == Relevance::HumanSubject && label.granularity == Granularity::Unknown {
            return Err(RiskError::InvalidLabel(
                "human-subject datasets need a granularity".into(),
            ));
        }
        let mut next = self.clone();
        let entry = next
            .entries
            .get_mut(key)
            .ok_or_else(|| RiskError::UnknownDataset(key.to_string()))?;
        if entry.label.same_decision(&label) {
            return Ok(next);
        }
        let old = std::mem::replace(&mut entry.label, label);
        entry.history.push(old);
        next.stage_counts.curated = next.curated_count();
        Ok(next)
    }

    /// Applies labels in order. Stops at the first unknown dataset or
    /// invalid label.
    pub fn apply_labels(&self, records: &[LabelRecord]) -> Result<Self> {
        let mut next = self.clone();
        for r in records {
            next = next.label_dataset(&r.dataset, r.label())?;
        }
        Ok(next)
    }

    pub fn curated_count(&self) -> u64 {
        self.entries
            .values()
            .filter(|e| e.label.relevance == Relevance::HumanSubject)
            .count() as u64
    }

    pub fn undecided_count(&self) -> usize {
        self.entries
            .values()
            .filter(|e| e.label.relevance == Relevance::Undecided)
            .count()
    }

    /// Human-subject entries, in key order. Refreshes the curated count.
    pub fn build_collection(&mut self, strict: bool) -> Result<Vec<DatasetMetadata>> {
        if strict {
            let undecided = self.undecided_count();
            if undecided > 0 {
                return Err(RiskError::IncompleteLabeling(undecided));
            }
        }
        let out: Vec<DatasetMetadata> = self
            .entries
            .values()
            .filter(|e| e.label.relevance == Relevance::HumanSubject)
            .map(|e| e.metadata.clone())
            .collect();
        self.stage_counts.curated = out.len() as u64;
        Ok(out)
    }

    /// Entries a curator rejected as non-human, for a second look.
    pub fn rejected(&self) -> Vec<&ManifestEntry> {
        self.entries
            .values()
            .filter(|e| e.label.relevance == Relevance::NonHuman)
            .collect()
    }

    pub fn funnel_report(&self) -> FunnelReport {
        let mut counts = self.stage_counts;
        counts.curated = self.curated_count();
        let (mut individual, mut aggregate) = (0, 0);
        for e in self.entries.values() {
            if e.label.relevance != Relevance::HumanSubject {
                continue;
            }
            match e.label.granularity {
                Granularity::IndividualRecord => individual += 1,
                Granularity::Aggregate => aggregate += 1,
                Granularity::Unknown => {}
            }
        }
        FunnelReport::from_counts(counts, individual, aggregate)
    }

    pub fn funnel_path(manifest_path: &Path) -> PathBuf {
        manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(FUNNEL_FILE)
    }

    /// Writes `collection.jsonl` at `path` and `funnel.json` next to it.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        let mut out = fs::File::create(path)?;
        for e in self.entries.values() {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        fs::write(Self::funnel_path(path), self.funnel_report().to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(RiskError::UnknownCollection(path.display().to_string()));
        }
        let reader = BufReader::new(fs::File::open(path)?);
        let mut entries = BTreeMap::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: ManifestEntry = serde_json::from_str(&line)?;
            entries.insert(e.key.clone(), e);
        }
        let funnel_path = Self::funnel_path(path);
        let mut stage_counts = if funnel_path.is_file() {
            let report: FunnelReport = serde_json::from_str(&fs::read_to_string(&funnel_path)?)?;
            report.counts()
        } else {
            let n = entries.len() as u64;
            StageCounts {
                resources: n,
                tabular: n,
                qi_filtered: n,
                curated: 0,
            }
        };
        let mut manifest = CollectionManifest {
            entries,
            stage_counts,
        };
        stage_counts.curated = manifest.curated_count();
        manifest.stage_counts = stage_counts;
        Ok(manifest)
    }
}
