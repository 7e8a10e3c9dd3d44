//! `riskcal` subcommands. Everything writes to the given output so the
//! commands can be driven from tests.

mod curate;

use std::fs;
use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use riskcal_core::catalog::{harvest_all, open_source, FetchOptions, TableCache};
use riskcal_core::curation::{read_label_file, CollectionManifest, DEFAULT_MIN_QI};
use riskcal_core::join::{
    auto_join_key, detect_disclosures, execute_join, joinability_risk, transitive_candidates,
    JoinSpec, JoinabilityScore, TableRef, DEFAULT_JOIN_ROW_CAP, DEFAULT_MAX_KEY_ATTRS,
};
use riskcal_core::metrics::{scan_table, ScanKeys, ScanReport, DEFAULT_ENTRY_POINT_THRESHOLD};
use riskcal_core::workflow::{
    count_candidates, redact_candidates, replay_history, CandidateCounts, CollectionRef,
    DefenderSession, QiSelection, Redaction, RiskAcknowledgment, Step, StepOutput, StepRequest,
    Workbench,
};
use riskcal_core::cluster::DEFAULT_DISTANCE_CUT;
use riskcal_core::join::DisclosureCandidate;
use riskcal_core::{QuasiIdentifierDictionary, RecordTable, Result, RiskError};
use serde::Serialize;
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "riskcal", version, about = "Disclosure-risk calibration for open tabular data")]
pub struct Cli {
    /// Quasi-identifier dictionary (JSON). Falls back to $RISKCAL_QI_DICT,
    /// then the builtin dictionary.
    #[arg(long, global = true, value_name = "PATH")]
    pub qi_dict: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Args)]
pub struct CollectionArgs {
    /// Curated collection manifest (`collection.jsonl`).
    #[arg(long, env = "RISKCAL_MANIFEST")]
    pub manifest: PathBuf,
    /// Fixture directory or portal URL the manifest was harvested from.
    #[arg(long, visible_alias = "fixtures", env = "RISKCAL_SOURCE")]
    pub source: String,
}

impl CollectionArgs {
    fn workbench(&self, dict: &QuasiIdentifierDictionary) -> Result<Arc<Workbench>> {
        let reference = CollectionRef {
            manifest: self.manifest.display().to_string(),
            source: self.source.clone(),
        };
        Ok(Arc::new(Workbench::open(reference, dict.clone())?))
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Harvest portal metadata, write the manifest and cache qi-filtered tables.
    Harvest {
        #[arg(long)]
        source: String,
        #[arg(long)]
        cache_dir: PathBuf,
        /// Refetch tables that are already cached.
        #[arg(long)]
        refresh: bool,
        /// Rows per cached table.
        #[arg(long)]
        limit: Option<usize>,
        /// Manifest to write; labels already in it are kept. Defaults to
        /// `<cache-dir>/collection.jsonl`.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MIN_QI)]
        min_qi: usize,
    },
    /// Label qi-filtered datasets, interactively or from a label file.
    Curate {
        #[arg(long)]
        manifest: PathBuf,
        /// JSON array of label records to apply instead of prompting.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// List datasets labeled non-human and exit.
        #[arg(long)]
        review_rejected: bool,
        /// Fail if any qi-filtered dataset is still undecided.
        #[arg(long)]
        strict: bool,
    },
    /// Print the curation funnel.
    Funnel {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// k/l/t summary and vulnerable entry points for a dataset, a CSV file
    /// or the whole collection (`collection`).
    Scan {
        target: String,
        /// `auto` or a comma-separated attribute list.
        #[arg(long, default_value = "auto")]
        keys: String,
        #[arg(long, default_value_t = DEFAULT_ENTRY_POINT_THRESHOLD)]
        threshold: usize,
        /// Also scan every nonempty subset of the key.
        #[arg(long)]
        subsets: bool,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long, env = "RISKCAL_MANIFEST")]
        manifest: Option<PathBuf>,
        #[arg(long, env = "RISKCAL_SOURCE")]
        source: Option<String>,
    },
    /// Cluster the collection by attribute overlap.
    Cluster {
        #[command(flatten)]
        collection: CollectionArgs,
        /// Comma-separated list or `profile:NAME`.
        #[arg(long)]
        qis: String,
        #[arg(long, default_value_t = DEFAULT_DISTANCE_CUT)]
        cut: f64,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Rank the dataset pairs of one cluster by joinability risk.
    Pairs {
        #[command(flatten)]
        collection: CollectionArgs,
        #[arg(long)]
        qis: String,
        /// Cluster id; defaults to the top-ranked cluster.
        #[arg(long)]
        cluster: Option<String>,
        #[arg(long, default_value_t = DEFAULT_DISTANCE_CUT)]
        cut: f64,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Join two datasets and report disclosure candidates.
    Join {
        #[command(flatten)]
        collection: CollectionArgs,
        #[arg(long)]
        left: String,
        #[arg(long)]
        right: String,
        /// Comma-separated key; chosen automatically when absent.
        #[arg(long)]
        key: Option<String>,
        #[arg(long, default_value_t = DEFAULT_JOIN_ROW_CAP)]
        row_cap: usize,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Print candidate values unmasked.
        #[arg(long)]
        i_understand_risk: bool,
    },
    /// Dataset pairs linked only through a bridge dataset.
    Transitive {
        #[command(flatten)]
        collection: CollectionArgs,
        #[arg(long, default_value_t = 0.2)]
        min_risk: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_KEY_ATTRS)]
        max_attrs: usize,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Serve the `/v1` HTTP API.
    Serve {
        #[command(flatten)]
        collection: CollectionArgs,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Static UI bundle to serve outside `/v1`.
        #[arg(long)]
        ui: Option<PathBuf>,
        /// Directory for per-session history files.
        #[arg(long)]
        history_dir: Option<PathBuf>,
    },
    /// Session history tools.
    Session {
        #[command(subcommand)]
        command: SessionCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum SessionCommand {
    /// Re-run a recorded session and print its report.
    Replay {
        history: PathBuf,
        /// Write each step output to `<dir>/NN-<step>.json`.
        #[arg(long)]
        outputs: Option<PathBuf>,
        #[arg(long)]
        i_understand_risk: bool,
    },
}

pub fn run(cli: Cli, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<()> {
    let dict = QuasiIdentifierDictionary::load_configured(cli.qi_dict.as_deref())?;
    match cli.command {
        Command::Harvest {
            source,
            cache_dir,
            refresh,
            limit,
            manifest,
            min_qi,
        } => harvest(&dict, &source, &cache_dir, refresh, limit, manifest, min_qi, out),
        Command::Curate {
            manifest,
            labels,
            review_rejected,
            strict,
        } => {
            if review_rejected {
                return curate::review_rejected(&manifest, out);
            }
            match labels {
                Some(labels) => curate_from_file(&manifest, &labels, strict, out),
                None => curate::interactive(&manifest, strict, input, out),
            }
        }
        Command::Funnel { manifest, format } => {
            let report = CollectionManifest::load(&manifest)?.funnel_report();
            match format {
                Format::Json => write!(out, "{}", report.to_json())?,
                Format::Text => writeln!(out, "{}", report.to_text())?,
            }
            Ok(())
        }
        Command::Scan {
            target,
            keys,
            threshold,
            subsets,
            format,
            manifest,
            source,
        } => {
            let keys: ScanKeys = keys.parse()?;
            let reports = scan(&dict, &target, &keys, threshold, subsets, manifest, source)?;
            match format {
                Format::Json if reports.len() == 1 && target != "collection" => {
                    print_json(out, &reports[0])
                }
                Format::Json => print_json(out, &reports),
                Format::Text => {
                    for r in &reports {
                        scan_text(out, r)?;
                    }
                    Ok(())
                }
            }
        }
        Command::Cluster {
            collection,
            qis,
            cut,
            format,
        } => {
            let mut session = DefenderSession::new(collection.workbench(&dict)?);
            session.set_quasi_identifiers(parse_qis(&qis))?;
            let output = step(&mut session, Step::Cluster, json!({ "cut": cut }))?;
            let StepOutput::Cluster { clusters } = &output else {
                unreachable!("cluster step returns clusters")
            };
            match format {
                Format::Json => print_json(out, clusters),
                Format::Text => {
                    for c in clusters {
                        writeln!(
                            out,
                            "{}  size {}  qi overlap {}  core [{}]",
                            c.id,
                            c.rank_score.size,
                            c.rank_score.qi_overlap,
                            c.core_signature.iter().cloned().collect::<Vec<_>>().join(", ")
                        )?;
                    }
                    Ok(())
                }
            }
        }
        Command::Pairs {
            collection,
            qis,
            cluster,
            cut,
            format,
        } => {
            let mut session = DefenderSession::new(collection.workbench(&dict)?);
            session.set_quasi_identifiers(parse_qis(&qis))?;
            step(&mut session, Step::Cluster, json!({ "cut": cut }))?;
            let output = step(&mut session, Step::Pairs, json!({ "cluster": cluster }))?;
            let StepOutput::Pairs { pairs, .. } = &output else {
                unreachable!("pairs step returns pairs")
            };
            match format {
                Format::Json => print_json(out, &output),
                Format::Text => {
                    for p in pairs {
                        let key = p.spec.as_ref().map(|s| s.key_attrs.join(", ")).unwrap_or_default();
                        writeln!(
                            out,
                            "{:.4}  {} x {}  key [{}]",
                            p.score.risk, p.left, p.right, key
                        )?;
                    }
                    Ok(())
                }
            }
        }
        Command::Join {
            collection,
            left,
            right,
            key,
            row_cap,
            format,
            i_understand_risk,
        } => {
            let wb = collection.workbench(&dict)?;
            let redaction = redaction(i_understand_risk);
            let report = join(&wb, &left, &right, key.as_deref(), row_cap, redaction)?;
            match format {
                Format::Json => print_json(out, &report),
                Format::Text => {
                    writeln!(
                        out,
                        "{} x {} on [{}]: {} keys, {} rows, risk {:.4}",
                        report.spec.left_id,
                        report.spec.right_id,
                        report.spec.key_attrs.join(", "),
                        report.matched_keys,
                        report.total_joined,
                        report.score.risk
                    )?;
                    writeln!(
                        out,
                        "{} identity, {} attribute candidates",
                        report.counts.identity, report.counts.attribute
                    )?;
                    Ok(())
                }
            }
        }
        Command::Transitive {
            collection,
            min_risk,
            max_attrs,
            format,
        } => {
            let wb = collection.workbench(&dict)?;
            let refs: Vec<TableRef<'_>> = wb
                .ids()
                .map(|id| Ok(TableRef::new(id, wb.table(id)?)))
                .collect::<Result<_>>()?;
            let found = transitive_candidates(&refs, &dict, min_risk, max_attrs, None)?;
            match format {
                Format::Json => print_json(out, &found),
                Format::Text => {
                    for c in &found {
                        writeln!(
                            out,
                            "{} -[{}]- {} -[{}]- {}",
                            c.endpoint_a,
                            c.key_ab.join(", "),
                            c.bridge_b,
                            c.key_bc.join(", "),
                            c.endpoint_c
                        )?;
                    }
                    Ok(())
                }
            }
        }
        Command::Serve {
            collection,
            port,
            host,
            ui,
            history_dir,
        } => {
            let wb = collection.workbench(&dict)?;
            if let Some(dir) = &history_dir {
                fs::create_dir_all(dir)?;
            }
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| RiskError::InvalidParameter(format!("address: {e}")))?;
            let state = Arc::new(riskcal_server::AppState::new(wb, history_dir));
            let app = match ui {
                Some(dir) => riskcal_server::router_with_ui(state, dir),
                None => riskcal_server::router(state),
            };
            writeln!(out, "serving /v1 on http://{addr}")?;
            out.flush()?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(riskcal_server::serve(app, addr))?;
            Ok(())
        }
        Command::Session {
            command:
                SessionCommand::Replay {
                    history,
                    outputs,
                    i_understand_risk,
                },
        } => {
            let replayed = replay_history(&history, dict)?;
            if let Some(dir) = outputs {
                fs::create_dir_all(&dir)?;
                for (i, o) in replayed.outputs.iter().enumerate() {
                    let name = format!("{:02}-{}.json", i + 1, o.step());
                    fs::write(dir.join(name), o.to_json())?;
                }
            }
            let report = replayed.session.export_report(redaction(i_understand_risk))?;
            write!(out, "{}", report.to_json())?;
            Ok(())
        }
    }
}

fn redaction(acknowledged: bool) -> Redaction {
    if acknowledged {
        Redaction::Unmasked(RiskAcknowledgment::i_understand_risk())
    } else {
        Redaction::Masked
    }
}

fn print_json<T: Serialize + ?Sized>(out: &mut dyn Write, value: &T) -> Result<()> {
    writeln!(out, "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn step(session: &mut DefenderSession, step: Step, params: serde_json::Value) -> Result<StepOutput> {
    session.run_step(&StepRequest::new(step, params))
}

/// `profile:NAME` or a comma-separated list.
pub fn parse_qis(s: &str) -> QiSelection {
    match s.strip_prefix("profile:") {
        Some(profile) => QiSelection::Profile {
            profile: profile.trim().to_string(),
        },
        None => QiSelection::Explicit {
            qis: split_list(s),
        },
    }
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(String::from)
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn harvest(
    dict: &QuasiIdentifierDictionary,
    source: &str,
    cache_dir: &Path,
    refresh: bool,
    limit: Option<usize>,
    manifest_path: Option<PathBuf>,
    min_qi: usize,
    out: &mut dyn Write,
) -> Result<()> {
    let src = open_source(source)?;
    let all = harvest_all(src.as_ref(), dict)?;
    let mut manifest = CollectionManifest::from_harvest(&all, dict, min_qi)?;
    let path = manifest_path.unwrap_or_else(|| cache_dir.join("collection.jsonl"));
    if path.is_file() {
        manifest.carry_labels_from(&CollectionManifest::load(&path)?);
    }
    let cache = TableCache::new(cache_dir)?;
    let opts = FetchOptions {
        limit,
        ..FetchOptions::default()
    };
    for entry in manifest.entries.values() {
        cache.get_or_fetch(src.as_ref(), &entry.metadata, opts, refresh)?;
    }
    manifest.save(&path)?;
    writeln!(out, "{}", manifest.funnel_report().to_text())?;
    writeln!(
        out,
        "{} tables cached in {}; manifest {}",
        manifest.entries.len(),
        cache.root().display(),
        path.display()
    )?;
    Ok(())
}

fn curate_from_file(manifest: &Path, labels: &Path, strict: bool, out: &mut dyn Write) -> Result<()> {
    let records = read_label_file(labels)?;
    let mut next = CollectionManifest::load(manifest)?.apply_labels(&records)?;
    next.build_collection(strict)?;
    next.save(manifest)?;
    writeln!(out, "{}", next.funnel_report().to_text())?;
    Ok(())
}

fn scan(
    dict: &QuasiIdentifierDictionary,
    target: &str,
    keys: &ScanKeys,
    threshold: usize,
    subsets: bool,
    manifest: Option<PathBuf>,
    source: Option<String>,
) -> Result<Vec<ScanReport>> {
    let file = Path::new(target);
    if file.is_file() {
        let table = RecordTable::from_csv_path(file, dict)?;
        return Ok(vec![scan_table(target, &table, keys, threshold, subsets, dict)?]);
    }
    let (Some(manifest), Some(source)) = (manifest, source) else {
        return Err(RiskError::InvalidParameter(format!(
            "'{target}' is not a file; --manifest and --source are required"
        )));
    };
    let wb = CollectionArgs { manifest, source }.workbench(dict)?;
    if target == "collection" {
        wb.ids()
            .map(|id| scan_table(id, wb.table(id)?, keys, threshold, subsets, dict))
            .collect()
    } else {
        let table = wb.table(target)?;
        Ok(vec![scan_table(target, table, keys, threshold, subsets, dict)?])
    }
}

fn scan_text(out: &mut dyn Write, r: &ScanReport) -> Result<()> {
    writeln!(
        out,
        "{}: {} rows, key [{}], k={}, {} singleton classes, {} entry points",
        r.dataset,
        r.rows,
        r.summary.key_attrs.join(", "),
        r.summary.k,
        r.summary.singleton_classes,
        r.entry_points.len()
    )?;
    for (attr, l) in &r.summary.l_per_sensitive {
        let t = r.summary.t_per_sensitive.get(attr).copied().unwrap_or_default();
        writeln!(out, "  {attr}: l={l} t={t:.4}")?;
    }
    for f in r.entry_points.iter().take(10) {
        writeln!(
            out,
            "  size {} [{}] = ({})",
            f.class_size,
            f.key_attrs.join(", "),
            f.key.join(", ")
        )?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct JoinReport {
    pub spec: JoinSpec,
    pub score: JoinabilityScore,
    pub matched_keys: usize,
    pub total_joined: u64,
    pub truncated: bool,
    pub redacted: bool,
    pub counts: CandidateCounts,
    pub candidates: Vec<DisclosureCandidate>,
}

fn join(
    wb: &Workbench,
    left: &str,
    right: &str,
    key: Option<&str>,
    row_cap: usize,
    redaction: Redaction,
) -> Result<JoinReport> {
    if row_cap == 0 {
        return Err(RiskError::InvalidParameter("row cap must be positive".into()));
    }
    let (a, b) = (wb.table(left)?, wb.table(right)?);
    let key = match key {
        Some(k) => split_list(k),
        None => auto_join_key(a, b, wb.dictionary(), DEFAULT_MAX_KEY_ATTRS)?,
    };
    let spec = JoinSpec::new(left, right, &key, a, b)?;
    let result = execute_join(a, b, &spec, row_cap)?;
    let found = detect_disclosures(&result, a, b, wb.dictionary());
    Ok(JoinReport {
        score: joinability_risk(a, b, &spec.key_attrs)?,
        spec,
        matched_keys: result.matches.len(),
        total_joined: result.total_joined,
        truncated: result.truncated,
        redacted: redaction.is_masked(),
        counts: count_candidates(&found),
        candidates: redact_candidates(&found, redaction),
    })
}
