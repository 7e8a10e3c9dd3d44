use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{
    ensure_unique_attributes, CatalogSource, DatasetMetadata, FetchOptions, FetchedTable,
    PortalDescriptor, ResourceKind,
};
use crate::error::{Result, RiskError};
use crate::qi::{AttributeDescriptor, QuasiIdentifierDictionary, ValueKind};
use crate::table::RecordTable;

/// `portals/<domain>/catalog.json` document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureCatalog {
    pub domain: String,
    pub display_name: String,
    /// Used as `fetched_at` for every item so runs are reproducible.
    pub snapshot: DateTime<Utc>,
    pub items: Vec<FixtureItem>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureItem {
    pub id: String,
    pub title: String,
    #[serde(default)]
    pub description: String,
    pub asset_type: String,
    #[serde(default)]
    pub row_count: Option<u64>,
    #[serde(default)]
    pub columns: Vec<FixtureColumn>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureColumn {
    pub name: String,
    #[serde(rename = "type", default = "default_column_type")]
    pub datatype: String,
}

fn default_column_type() -> String {
    "text".to_string()
}

/// Offline corpus laid out as
/// `portals/<domain>/catalog.json` + `portals/<domain>/data/<dataset_id>.csv`.
#[derive(Debug, Clone)]
pub struct FixtureSource {
    root: PathBuf,
}

impl FixtureSource {
    pub fn new(root: &Path) -> Self {
        FixtureSource {
            root: root.to_path_buf(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn portals_dir(&self) -> PathBuf {
        self.root.join("portals")
    }

    fn read_catalog(&self, domain: &str) -> Result<FixtureCatalog> {
        let path = self.portals_dir().join(domain).join("catalog.json");
        if !path.is_file() {
            return Err(RiskError::UnknownPortal(domain.to_string()));
        }
        let text = fs::read_to_string(&path)?;
        let cat: FixtureCatalog = serde_json::from_str(&text)
            .map_err(|e| RiskError::MalformedCatalog(format!("{}: {e}", path.display())))?;
        if cat.domain != domain {
            return Err(RiskError::MalformedCatalog(format!(
                "{}: domain field '{}' does not match directory",
                path.display(),
                cat.domain
            )));
        }
        Ok(cat)
    }
}

impl CatalogSource for FixtureSource {
    fn discover_portals(&self) -> Result<Vec<PortalDescriptor>> {
        let dir = self.portals_dir();
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let mut domains: Vec<String> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().join("catalog.json").is_file())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        domains.sort();
        domains
            .iter()
            .map(|d| {
                let cat = self.read_catalog(d)?;
                if cat.domain.is_empty() {
                    return Err(RiskError::MalformedCatalog("empty domain".into()));
                }
                Ok(PortalDescriptor {
                    domain: cat.domain,
                    display_name: cat.display_name,
                    resource_count: cat.items.len() as u64,
                })
            })
            .collect()
    }

    fn harvest_metadata(
        &self,
        portal: &PortalDescriptor,
        dict: &QuasiIdentifierDictionary,
    ) -> Result<Vec<DatasetMetadata>> {
        let cat = self.read_catalog(&portal.domain)?;
        let mut out = Vec::with_capacity(cat.items.len());
        for item in cat.items {
            let attributes = item
                .columns
                .iter()
                .map(|c| {
                    AttributeDescriptor::new(&c.name, ValueKind::from_catalog_type(&c.datatype), dict)
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| RiskError::MalformedCatalog(format!("{}: {e}", item.id)))?;
            ensure_unique_attributes(&item.id, &attributes)?;
            out.push(DatasetMetadata {
                portal: cat.domain.clone(),
                dataset_id: item.id,
                title: item.title,
                description: item.description,
                resource_kind: ResourceKind::from_asset_type(&item.asset_type),
                attributes,
                row_count: item.row_count,
                fetched_at: cat.snapshot,
            });
        }
        Ok(out)
    }

    fn fetch_records(&self, meta: &DatasetMetadata, opts: FetchOptions) -> Result<FetchedTable> {
        if meta.resource_kind != ResourceKind::Dataset {
            return Err(RiskError::NotTabular(meta.key().to_string()));
        }
        let path = self
            .portals_dir()
            .join(&meta.portal)
            .join("data")
            .join(format!("{}.csv", meta.dataset_id));
        if !path.is_file() {
            if !self.portals_dir().join(&meta.portal).is_dir() {
                return Err(RiskError::UnknownPortal(meta.portal.clone()));
            }
            return Err(RiskError::UnknownDataset(meta.key().to_string()));
        }
        let file = fs::File::open(&path)?;
        let (table, dropped_rows) =
            RecordTable::read_csv(file, meta.attributes.clone(), opts.limit, opts.strict_rows)?;
        Ok(FetchedTable {
            table,
            dropped_rows,
        })
    }
}
