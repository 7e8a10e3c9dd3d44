//! The defender workflow: cluster the curated collection, triage pairs,
//! join, then look for disclosures. A [`Workbench`] holds the collection
//! and its tables; a [`DefenderSession`] holds one person's progress
//! through the steps.

mod parallel_sets;
mod report;
mod session;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::{open_source, CatalogSource, DatasetMetadata, FetchOptions};
use crate::cluster::DatasetAttributes;
use crate::curation::CollectionManifest;
use crate::error::{Result, RiskError};
use crate::qi::QuasiIdentifierDictionary;
use crate::table::RecordTable;

pub use parallel_sets::{
    parallel_sets_model, Axis, CategoryCount, ParallelSetsModel, Ribbon, RibbonSet,
    DEFAULT_MAX_CATEGORIES, OTHER_BUCKET, TRANSITION_ARROW,
};
pub use report::{
    count_candidates, mask_value, redact_candidates, CandidateCounts, Redaction, ReportDocument,
    ReportedJoin, ReportedPair, ReportedStep, RiskAcknowledgment,
};
pub use session::{
    create_session, read_history, replay_entries, replay_history, DefenderSession, HistoryEntry,
    JoinStepOutput, QiSelection, ReplayOutcome, SessionView, Step, StepOutput, StepRequest,
};

/// Where a workbench was loaded from. Recorded in session histories so a
/// replay can rebuild the same workbench.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionRef {
    pub manifest: String,
    pub source: String,
}

/// The curated collection with every member's table loaded.
#[derive(Debug, Clone)]
pub struct Workbench {
    reference: CollectionRef,
    manifest: CollectionManifest,
    collection: Vec<DatasetMetadata>,
    tables: BTreeMap<String, RecordTable>,
    dict: QuasiIdentifierDictionary,
}

impl Workbench {
    /// Loads the manifest, builds the human-subject collection and fetches
    /// every member's rows from `source` (a fixture dir or endpoint).
    pub fn open(reference: CollectionRef, dict: QuasiIdentifierDictionary) -> Result<Self> {
        let source = open_source(&reference.source)?;
        Self::open_with(reference, source.as_ref(), dict)
    }

    pub fn open_with(
        reference: CollectionRef,
        source: &dyn CatalogSource,
        dict: QuasiIdentifierDictionary,
    ) -> Result<Self> {
        let path = Path::new(&reference.manifest);
        if !path.is_file() {
            return Err(RiskError::UnknownCollection(reference.manifest.clone()));
        }
        let mut manifest = CollectionManifest::load(path)?;
        let collection = manifest.build_collection(false)?;
        let mut tables = BTreeMap::new();
        for meta in &collection {
            let fetched = source.fetch_records(meta, FetchOptions::default())?;
            tables.insert(meta.key().to_string(), fetched.table);
        }
        Ok(Workbench {
            reference,
            manifest,
            collection,
            tables,
            dict,
        })
    }

    /// Builds a workbench from in-memory parts.
    pub fn from_parts(
        reference: CollectionRef,
        manifest: CollectionManifest,
        tables: BTreeMap<String, RecordTable>,
        dict: QuasiIdentifierDictionary,
    ) -> Result<Self> {
        let mut manifest = manifest;
        let collection = manifest.build_collection(false)?;
        for meta in &collection {
            if !tables.contains_key(&meta.key().to_string()) {
                return Err(RiskError::UnknownDataset(meta.key().to_string()));
            }
        }
        Ok(Workbench {
            reference,
            manifest,
            collection,
            tables,
            dict,
        })
    }

    pub fn reference(&self) -> &CollectionRef {
        &self.reference
    }

    pub fn manifest(&self) -> &CollectionManifest {
        &self.manifest
    }

    pub fn collection(&self) -> &[DatasetMetadata] {
        &self.collection
    }

    pub fn dictionary(&self) -> &QuasiIdentifierDictionary {
        &self.dict
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.tables.keys().map(String::as_str)
    }

    pub fn table(&self, id: &str) -> Result<&RecordTable> {
        self.tables
            .get(id)
            .ok_or_else(|| RiskError::UnknownDataset(id.to_string()))
    }

    pub fn metadata(&self, id: &str) -> Result<&DatasetMetadata> {
        self.collection
            .iter()
            .find(|m| m.key().to_string() == id)
            .ok_or_else(|| RiskError::UnknownDataset(id.to_string()))
    }

    pub fn cluster_inputs(&self) -> Vec<DatasetAttributes> {
        self.collection
            .iter()
            .map(|m| DatasetAttributes::new(m.key().to_string(), m.attribute_names()))
            .collect()
    }
}
