use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{cache_key, CatalogSource, DatasetMetadata, FetchOptions};
use crate::error::Result;
use crate::table::RecordTable;

#[derive(Serialize, Deserialize)]
struct CachedTable {
    portal: String,
    dataset_id: String,
    table: RecordTable,
}

/// One JSON file per [`cache_key`] under a root directory. Writes go
/// through a temp file and an atomic rename, so readers never observe a
/// partial entry.
#[derive(Debug, Clone)]
pub struct TableCache {
    root: PathBuf,
}

impl TableCache {
    pub fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(TableCache {
            root: root.to_path_buf(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, meta: &DatasetMetadata) -> PathBuf {
        self.root.join(format!("{}.json", cache_key(meta)))
    }

    pub fn get(&self, meta: &DatasetMetadata) -> Result<Option<RecordTable>> {
        let path = self.path_for(meta);
        if !path.is_file() {
            return Ok(None);
        }
        let cached: CachedTable = serde_json::from_slice(&fs::read(&path)?)?;
        Ok(Some(cached.table))
    }

    pub fn put(&self, meta: &DatasetMetadata, table: &RecordTable) -> Result<()> {
        let entry = CachedTable {
            portal: meta.portal.clone(),
            dataset_id: meta.dataset_id.clone(),
            table: table.clone(),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(&self.root)?;
        serde_json::to_writer(&mut tmp, &entry)?;
        tmp.flush()?;
        tmp.persist(self.path_for(meta)).map_err(|e| e.error)?;
        Ok(())
    }

    /// Cached table if present (and `refresh` is off), else fetch and store.
    pub fn get_or_fetch(
        &self,
        source: &dyn CatalogSource,
        meta: &DatasetMetadata,
        opts: FetchOptions,
        refresh: bool,
    ) -> Result<RecordTable> {
        if !refresh {
            if let Some(t) = self.get(meta)? {
                return Ok(match opts.limit {
                    Some(l) if t.len() > l => t.truncated(l),
                    _ => t,
                });
            }
        }
        let fetched = source.fetch_records(meta, opts)?;
        if fetched.dropped_rows > 0 {
            log::warn!(
                "{}: dropped {} malformed rows",
                meta.key(),
                fetched.dropped_rows
            );
        }
        self.put(meta, &fetched.table)?;
        Ok(fetched.table)
    }
}
