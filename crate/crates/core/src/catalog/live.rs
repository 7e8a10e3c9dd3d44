use std::thread;
use std::time::Duration;

use chrono::Utc;
use serde::Deserialize;

use super::{
    ensure_unique_attributes, CatalogSource, DatasetMetadata, FetchOptions, FetchedTable,
    PortalDescriptor, ResourceKind, DEFAULT_ROW_CAP,
};
use crate::error::{Result, RiskError};
use crate::qi::{AttributeDescriptor, QuasiIdentifierDictionary, ValueKind};
use crate::table::RecordTable;

#[derive(Debug, Clone)]
pub struct LiveSourceConfig {
    /// Discovery endpoint root, e.g. `https://api.us.socrata.com`.
    pub base_url: String,
    /// Row endpoint root. `None` means `https://<portal domain>`.
    pub rows_base: Option<String>,
    pub page_size: usize,
    pub max_attempts: u32,
    pub backoff: Duration,
    pub timeout: Duration,
}

impl LiveSourceConfig {
    pub fn new(base_url: &str) -> Self {
        LiveSourceConfig {
            base_url: base_url.trim_end_matches('/').to_string(),
            rows_base: None,
            page_size: 1000,
            max_attempts: 3,
            backoff: Duration::from_millis(250),
            timeout: Duration::from_secs(30),
        }
    }
}

/// Discovery-API driver. Listing endpoints are paged sequentially; every
/// request is retried with exponential backoff.
pub struct LiveSource {
    config: LiveSourceConfig,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct Page<T> {
    results: Vec<T>,
}

#[derive(Deserialize)]
struct DomainEntry {
    domain: String,
    #[serde(default)]
    count: u64,
}

#[derive(Deserialize)]
struct CatalogEntry {
    resource: Resource,
}

#[derive(Deserialize)]
struct Resource {
    id: String,
    #[serde(default)]
    name: String,
    #[serde(default)]
    description: Option<String>,
    #[serde(rename = "type", default)]
    kind: String,
    #[serde(default)]
    columns_field_name: Vec<String>,
    #[serde(default)]
    columns_datatype: Vec<String>,
}

impl LiveSource {
    pub fn new(config: LiveSourceConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .build()
            .new_agent();
        LiveSource { config, agent }
    }

    fn get_text(&self, url: &str) -> Result<String> {
        let mut delay = self.config.backoff;
        let mut last = String::new();
        for attempt in 1..=self.config.max_attempts.max(1) {
            match self.agent.get(url).call() {
                Ok(mut resp) => {
                    return resp
                        .body_mut()
                        .with_config()
                        .limit(1 << 30)
                        .read_to_string()
                        .map_err(|e| RiskError::NetworkFailure(format!("{url}: {e}")));
                }
                Err(ureq::Error::StatusCode(code)) if (400..500).contains(&code) && code != 429 => {
                    return Err(RiskError::NetworkFailure(format!("{url}: HTTP {code}")));
                }
                Err(e) => {
                    log::warn!("attempt {attempt} for {url} failed: {e}");
                    last = e.to_string();
                }
            }
            if attempt < self.config.max_attempts {
                thread::sleep(delay);
                delay *= 2;
            }
        }
        Err(RiskError::NetworkFailure(format!("{url}: {last}")))
    }

    fn get_page<T: for<'de> Deserialize<'de>>(&self, url: &str) -> Result<Vec<T>> {
        let text = self.get_text(url)?;
        let page: Page<T> = serde_json::from_str(&text)
            .map_err(|e| RiskError::MalformedCatalog(format!("{url}: {e}")))?;
        Ok(page.results)
    }

    /// Fetches `url_for(offset)` until a short page comes back.
    fn paginate<T, F>(&self, url_for: F) -> Result<Vec<T>>
    where
        T: for<'de> Deserialize<'de>,
        F: Fn(usize, usize) -> String,
    {
        let size = self.config.page_size.max(1);
        let mut out = Vec::new();
        loop {
            let page: Vec<T> = self.get_page(&url_for(out.len(), size))?;
            let n = page.len();
            out.extend(page);
            if n < size {
                return Ok(out);
            }
        }
    }
}

fn encode_query(s: &str) -> String {
    s.bytes()
        .map(|b| match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'.' | b'_' | b'~' => {
                (b as char).to_string()
            }
            _ => format!("%{b:02X}"),
        })
        .collect()
}

impl CatalogSource for LiveSource {
    fn discover_portals(&self) -> Result<Vec<PortalDescriptor>> {
        let base = &self.config.base_url;
        let mut domains: Vec<DomainEntry> = self
            .paginate(|offset, limit| format!("{base}/api/catalog/v1/domains?limit={limit}&offset={offset}"))?;
        domains.sort_by(|a, b| a.domain.cmp(&b.domain));
        domains.dedup_by(|a, b| a.domain == b.domain);
        Ok(domains
            .into_iter()
            .filter(|d| !d.domain.is_empty())
            .map(|d| PortalDescriptor {
                display_name: d.domain.clone(),
                domain: d.domain,
                resource_count: d.count,
            })
            .collect())
    }

    fn harvest_metadata(
        &self,
        portal: &PortalDescriptor,
        dict: &QuasiIdentifierDictionary,
    ) -> Result<Vec<DatasetMetadata>> {
        let base = &self.config.base_url;
        let domain = encode_query(&portal.domain);
        let entries: Vec<CatalogEntry> = self.paginate(|offset, limit| {
            format!("{base}/api/catalog/v1?domains={domain}&limit={limit}&offset={offset}")
        })?;
        let fetched_at = Utc::now();
        let mut out = Vec::with_capacity(entries.len());
        for e in entries {
            let r = e.resource;
            let attributes = r
                .columns_field_name
                .iter()
                .enumerate()
                .map(|(i, name)| {
                    let kind = r
                        .columns_datatype
                        .get(i)
                        .map(|t| ValueKind::from_catalog_type(t))
                        .unwrap_or(ValueKind::Categorical);
                    AttributeDescriptor::new(name, kind, dict)
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|err| RiskError::MalformedCatalog(format!("{}: {err}", r.id)))?;
            ensure_unique_attributes(&r.id, &attributes)?;
            out.push(DatasetMetadata {
                portal: portal.domain.clone(),
                dataset_id: r.id,
                title: r.name,
                description: r.description.unwrap_or_default(),
                resource_kind: ResourceKind::from_asset_type(&r.kind),
                attributes,
                row_count: None,
                fetched_at,
            });
        }
        Ok(out)
    }

    fn fetch_records(&self, meta: &DatasetMetadata, opts: FetchOptions) -> Result<FetchedTable> {
        if meta.resource_kind != ResourceKind::Dataset {
            return Err(RiskError::NotTabular(meta.key().to_string()));
        }
        let root = self
            .config
            .rows_base
            .clone()
            .unwrap_or_else(|| format!("https://{}", meta.portal));
        let limit = opts.limit.unwrap_or(DEFAULT_ROW_CAP);
        let url = format!(
            "{}/resource/{}.csv?$limit={limit}",
            root.trim_end_matches('/'),
            encode_query(&meta.dataset_id)
        );
        let body = self.get_text(&url)?;
        let (table, dropped_rows) = RecordTable::read_csv(
            body.as_bytes(),
            meta.attributes.clone(),
            Some(limit),
            opts.strict_rows,
        )?;
        Ok(FetchedTable {
            table,
            dropped_rows,
        })
    }
}
