//! Portal discovery, metadata harvesting and record retrieval.
//!
//! Two sources implement [`CatalogSource`]: [`FixtureSource`] reads an
//! offline directory tree and [`LiveSource`] talks to a discovery API over
//! HTTP. [`TableCache`] stores fetched tables on disk under
//! [`cache_key`]s.

mod cache;
mod fixture;
mod live;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, RiskError};
use crate::qi::{normalize_attribute, AttributeDescriptor, QuasiIdentifierDictionary};
use crate::table::RecordTable;

pub use cache::TableCache;
pub use fixture::FixtureSource;
pub use live::{LiveSource, LiveSourceConfig};

/// Default cap on rows fetched per dataset.
pub const DEFAULT_ROW_CAP: usize = 50_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortalDescriptor {
    pub domain: String,
    pub display_name: String,
    pub resource_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResourceKind {
    Dataset,
    Map,
    DataDictionary,
    Other,
}

impl ResourceKind {
    /// Maps a catalog asset-type string.
    pub fn from_asset_type(asset_type: &str) -> ResourceKind {
        match normalize_attribute(asset_type).as_str() {
            "dataset" | "table" => ResourceKind::Dataset,
            "map" | "geo" | "geospatial" => ResourceKind::Map,
            "data dictionary" | "dictionary" => ResourceKind::DataDictionary,
            _ => ResourceKind::Other,
        }
    }
}

/// Global identity of a dataset: `portal:dataset_id`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DatasetKey {
    pub portal: String,
    pub dataset_id: String,
}

impl DatasetKey {
    pub fn new(portal: impl Into<String>, dataset_id: impl Into<String>) -> Self {
        DatasetKey {
            portal: portal.into(),
            dataset_id: dataset_id.into(),
        }
    }
}

impl fmt::Display for DatasetKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.portal, self.dataset_id)
    }
}

impl FromStr for DatasetKey {
    type Err = RiskError;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some((p, d)) if !p.is_empty() && !d.is_empty() => Ok(DatasetKey::new(p, d)),
            _ => Err(RiskError::UnknownDataset(s.to_string())),
        }
    }
}

impl Serialize for DatasetKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DatasetKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub portal: String,
    pub dataset_id: String,
    pub title: String,
    pub description: String,
    pub resource_kind: ResourceKind,
    pub attributes: Vec<AttributeDescriptor>,
    pub row_count: Option<u64>,
    pub fetched_at: DateTime<Utc>,
}

impl DatasetMetadata {
    pub fn key(&self) -> DatasetKey {
        DatasetKey::new(&self.portal, &self.dataset_id)
    }

    pub fn attribute_names(&self) -> impl Iterator<Item = &str> {
        self.attributes.iter().map(|a| a.normalized_name.as_str())
    }
}

/// Options for [`CatalogSource::fetch_records`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FetchOptions {
    pub limit: Option<usize>,
    /// Fail on the first ragged row instead of dropping it.
    pub strict_rows: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FetchedTable {
    pub table: RecordTable,
    pub dropped_rows: usize,
}

/// A place portals, metadata and rows come from.
pub trait CatalogSource: Send + Sync {
    fn discover_portals(&self) -> Result<Vec<PortalDescriptor>>;

    fn harvest_metadata(
        &self,
        portal: &PortalDescriptor,
        dict: &QuasiIdentifierDictionary,
    ) -> Result<Vec<DatasetMetadata>>;

    fn fetch_records(&self, meta: &DatasetMetadata, opts: FetchOptions) -> Result<FetchedTable>;
}

/// Opens a fixture directory or a live endpoint depending on the shape of
/// `source` (anything starting with `http://` or `https://` is live).
pub fn open_source(source: &str) -> Result<Box<dyn CatalogSource>> {
    if source.starts_with("http://") || source.starts_with("https://") {
        Ok(Box::new(LiveSource::new(LiveSourceConfig::new(source))))
    } else {
        Ok(Box::new(FixtureSource::new(Path::new(source))))
    }
}

/// Harvests every portal of a source, in portal order.
pub fn harvest_all(
    source: &dyn CatalogSource,
    dict: &QuasiIdentifierDictionary,
) -> Result<Vec<DatasetMetadata>> {
    let mut out = Vec::new();
    for portal in source.discover_portals()? {
        out.extend(source.harvest_metadata(&portal, dict)?);
    }
    Ok(out)
}

/// Deterministic content key over (portal, dataset id, fetch date).
pub fn cache_key(meta: &DatasetMetadata) -> String {
    let date = meta.fetched_at.format("%Y-%m-%d").to_string();
    let mut h = Sha256::new();
    for part in [meta.portal.as_str(), meta.dataset_id.as_str(), date.as_str()] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    let digest = hex::encode(h.finalize());
    format!("{}-{}", date, &digest[..32])
}

pub(crate) fn ensure_unique_attributes(
    context: &str,
    attrs: &[AttributeDescriptor],
) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for a in attrs {
        if !seen.insert(a.normalized_name.as_str()) {
            return Err(RiskError::MalformedCatalog(format!(
                "{context}: attribute '{}' appears twice after normalization",
                a.normalized_name
            )));
        }
    }
    Ok(())
}
