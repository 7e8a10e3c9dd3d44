use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::parallel_sets::{parallel_sets_model, ParallelSetsModel, DEFAULT_MAX_CATEGORIES};
use super::report::{
    count_candidates, redact_candidates, CandidateCounts, Redaction, ReportDocument, ReportedJoin,
    ReportedPair, ReportedStep,
};
use super::{CollectionRef, Workbench};
use crate::cancel::CancelToken;
use crate::cluster::{cluster_datasets, rank_clusters, DatasetCluster, DEFAULT_DISTANCE_CUT};
use crate::error::{Result, RiskError};
use crate::join::{
    auto_join_key, detect_disclosures, execute_join, joinability_risk, rank_pairs,
    shared_attribute_details, suggest_features, DisclosureCandidate, FeatureSuggestion, JoinResult,
    JoinSpec, JoinabilityScore, RankedPair, SharedAttribute, TableRef, DEFAULT_JOIN_ROW_CAP,
    DEFAULT_MAX_KEY_ATTRS,
};
use crate::qi::{normalize_attribute, QuasiIdentifierDictionary, SemanticClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Step {
    Cluster,
    Pairs,
    Join,
    Suggest,
    #[serde(alias = "parallel_sets")]
    ParallelSets,
    Disclosures,
}

impl Step {
    pub const ALL: [Step; 6] = [
        Step::Cluster,
        Step::Pairs,
        Step::Join,
        Step::Suggest,
        Step::ParallelSets,
        Step::Disclosures,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Step::Cluster => "cluster",
            Step::Pairs => "pairs",
            Step::Join => "join",
            Step::Suggest => "suggest",
            Step::ParallelSets => "parallel-sets",
            Step::Disclosures => "disclosures",
        }
    }
}

impl std::fmt::Display for Step {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Step {
    type Err = RiskError;

    fn from_str(s: &str) -> Result<Self> {
        Step::ALL
            .into_iter()
            .find(|st| st.as_str() == s || st.as_str().replace('-', "_") == s)
            .ok_or_else(|| RiskError::InvalidParameter(format!("unknown step `{s}`")))
    }
}

/// A step and its JSON parameters, as recorded in the session history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRequest {
    pub step: Step,
    #[serde(default)]
    pub params: Value,
}

impl StepRequest {
    pub fn new(step: Step, params: Value) -> Self {
        StepRequest { step, params }
    }
}

/// Quasi-identifier selection: a named dictionary profile or an explicit list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QiSelection {
    Profile { profile: String },
    Explicit { qis: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: String,
    pub at: DateTime<Utc>,
    pub params: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinStepOutput {
    pub spec: JoinSpec,
    pub score: JoinabilityScore,
    pub matched_keys: usize,
    pub total_joined: u64,
    pub truncated: bool,
    pub shared: Vec<SharedAttribute>,
    /// Shared attributes not in the key, quasi-identifiers first.
    pub unused_shared: Vec<String>,
}

/// Result of one step. Contains no timestamps, so a replay of the same
/// history serializes identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", content = "output", rename_all = "kebab-case")]
pub enum StepOutput {
    Cluster {
        clusters: Vec<DatasetCluster>,
    },
    Pairs {
        cluster: String,
        pair_count: u64,
        pairs: Vec<RankedPair>,
    },
    Join(JoinStepOutput),
    Suggest {
        suggestions: Vec<FeatureSuggestion>,
    },
    ParallelSets(ParallelSetsModel),
    /// Candidate values are masked; raw values only leave through an
    /// acknowledged report export.
    Disclosures {
        counts: CandidateCounts,
        candidates: Vec<DisclosureCandidate>,
    },
}

impl StepOutput {
    pub fn step(&self) -> Step {
        match self {
            StepOutput::Cluster { .. } => Step::Cluster,
            StepOutput::Pairs { .. } => Step::Pairs,
            StepOutput::Join(_) => Step::Join,
            StepOutput::Suggest { .. } => Step::Suggest,
            StepOutput::ParallelSets(_) => Step::ParallelSets,
            StepOutput::Disclosures { .. } => Step::Disclosures,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("step output serializes");
        s.push('\n');
        s
    }
}

/// Read-only view of a session for status endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub collection: CollectionRef,
    pub selected_qis: Vec<String>,
    pub selected_cluster: Option<String>,
    pub selected_pair: Option<ReportedPair>,
    pub join_spec: Option<JoinSpec>,
    pub completed: Vec<Step>,
    pub history: Vec<HistoryEntry>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClusterParams {
    cut: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairsParams {
    cluster: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct JoinParams {
    left: Option<String>,
    right: Option<String>,
    key: Option<Vec<String>>,
    row_cap: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmptyParams {}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParallelSetsParams {
    axes: Vec<String>,
    max_categories: Option<usize>,
}

fn parse_params<T: DeserializeOwned>(step: Step, params: &Value) -> Result<T> {
    let value = if params.is_null() {
        Value::Object(Default::default())
    } else {
        params.clone()
    };
    serde_json::from_value(value)
        .map_err(|e| RiskError::InvalidParameter(format!("{step} parameters: {e}")))
}

fn out_of_order(step: Step, missing: &str) -> RiskError {
    RiskError::StepOutOfOrder {
        step: step.to_string(),
        missing: missing.to_string(),
    }
}

/// One defender's progress through the workflow. Every successful step and
/// selection is appended to the history, which replays deterministically.
#[derive(Debug)]
pub struct DefenderSession {
    session_id: String,
    workbench: Arc<Workbench>,
    cancel: CancelToken,
    log: Option<PathBuf>,
    history: Vec<HistoryEntry>,
    selected_qis: Vec<String>,
    clusters: Option<Vec<DatasetCluster>>,
    selected_cluster: Option<String>,
    pairs: Option<Vec<RankedPair>>,
    selected_pair: Option<(String, String)>,
    last_result: Option<JoinResult>,
    suggestions: Option<Vec<FeatureSuggestion>>,
    parallel_sets: Option<ParallelSetsModel>,
    disclosures: Option<Vec<DisclosureCandidate>>,
}

pub fn create_session(workbench: Arc<Workbench>) -> DefenderSession {
    DefenderSession::new(workbench)
}

impl DefenderSession {
    pub fn new(workbench: Arc<Workbench>) -> Self {
        let session_id = uuid::Uuid::new_v4().to_string();
        let created = HistoryEntry {
            step: "created".into(),
            at: Utc::now(),
            params: serde_json::to_value(workbench.reference()).expect("reference serializes"),
        };
        DefenderSession {
            session_id,
            workbench,
            cancel: CancelToken::new(),
            log: None,
            history: vec![created],
            selected_qis: Vec::new(),
            clusters: None,
            selected_cluster: None,
            pairs: None,
            selected_pair: None,
            last_result: None,
            suggestions: None,
            parallel_sets: None,
            disclosures: None,
        }
    }

    /// Mirrors the history into an append-only JSONL file, starting with
    /// the entries recorded so far.
    pub fn with_history_log(mut self, path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut file = File::create(&path)?;
        for entry in &self.history {
            writeln!(file, "{}", serde_json::to_string(entry)?)?;
        }
        self.log = Some(path);
        Ok(self)
    }

    pub fn id(&self) -> &str {
        &self.session_id
    }

    pub fn workbench(&self) -> &Workbench {
        &self.workbench
    }

    pub fn cancel_token(&self) -> CancelToken {
        self.cancel.clone()
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    pub fn selected_qis(&self) -> &[String] {
        &self.selected_qis
    }

    pub fn last_result(&self) -> Option<&JoinResult> {
        self.last_result.as_ref()
    }

    pub fn disclosures(&self) -> Option<&[DisclosureCandidate]> {
        self.disclosures.as_deref()
    }

    pub fn view(&self) -> SessionView {
        let mut completed = Vec::new();
        if self.clusters.is_some() {
            completed.push(Step::Cluster);
        }
        if self.pairs.is_some() {
            completed.push(Step::Pairs);
        }
        if self.last_result.is_some() {
            completed.push(Step::Join);
        }
        if self.suggestions.is_some() {
            completed.push(Step::Suggest);
        }
        if self.parallel_sets.is_some() {
            completed.push(Step::ParallelSets);
        }
        if self.disclosures.is_some() {
            completed.push(Step::Disclosures);
        }
        SessionView {
            session_id: self.session_id.clone(),
            collection: self.workbench.reference().clone(),
            selected_qis: self.selected_qis.clone(),
            selected_cluster: self.selected_cluster.clone(),
            selected_pair: self.reported_pair(),
            join_spec: self.last_result.as_ref().map(|r| r.spec.clone()),
            completed,
            history: self.history.clone(),
        }
    }

    fn record(&mut self, step: &str, params: Value) -> Result<()> {
        let entry = HistoryEntry {
            step: step.to_string(),
            at: Utc::now(),
            params,
        };
        if let Some(path) = &self.log {
            let mut file = OpenOptions::new().append(true).open(path)?;
            writeln!(file, "{}", serde_json::to_string(&entry)?)?;
        }
        self.history.push(entry);
        Ok(())
    }

    fn clear_from(&mut self, step: Step) {
        let order = Step::ALL.iter().position(|s| *s == step).unwrap_or(0);
        if order == 0 {
            self.clusters = None;
            self.selected_cluster = None;
        }
        if order <= 1 {
            self.pairs = None;
            self.selected_pair = None;
        }
        if order <= 2 {
            self.last_result = None;
        }
        self.suggestions = None;
        self.parallel_sets = None;
        self.disclosures = None;
    }

    /// Selects the quasi-identifiers driving cluster ranking. Invalidates
    /// every step result.
    pub fn set_quasi_identifiers(&mut self, selection: QiSelection) -> Result<Vec<String>> {
        let dict = self.workbench.dictionary();
        let raw: Vec<String> = match &selection {
            QiSelection::Profile { profile } => dict.profile(profile)?.to_vec(),
            QiSelection::Explicit { qis } => qis.clone(),
        };
        let mut qis: Vec<String> = raw
            .iter()
            .map(|q| normalize_attribute(q))
            .filter(|q| !q.is_empty())
            .collect();
        qis.sort();
        qis.dedup();
        if qis.is_empty() {
            return Err(RiskError::EmptySelection);
        }
        self.clear_from(Step::Cluster);
        self.selected_qis = qis.clone();
        self.record("qis", serde_json::to_value(&selection)?)?;
        Ok(qis)
    }

    /// Runs one step. Failed steps leave the session unchanged and are not
    /// recorded.
    pub fn run_step(&mut self, request: &StepRequest) -> Result<StepOutput> {
        self.cancel.reset();
        let output = match request.step {
            Step::Cluster => self.step_cluster(&request.params)?,
            Step::Pairs => self.step_pairs(&request.params)?,
            Step::Join => self.step_join(&request.params)?,
            Step::Suggest => self.step_suggest(&request.params)?,
            Step::ParallelSets => self.step_parallel_sets(&request.params)?,
            Step::Disclosures => self.step_disclosures(&request.params)?,
        };
        self.record(request.step.as_str(), request.params.clone())?;
        Ok(output)
    }

    fn step_cluster(&mut self, params: &Value) -> Result<StepOutput> {
        let p: ClusterParams = parse_params(Step::Cluster, params)?;
        if self.selected_qis.is_empty() {
            return Err(out_of_order(Step::Cluster, "qis"));
        }
        let cut = p.cut.unwrap_or(DEFAULT_DISTANCE_CUT);
        let clusters = cluster_datasets(&self.workbench.cluster_inputs(), cut)?;
        let ranked = rank_clusters(clusters, &self.selected_qis);
        self.cancel.check()?;
        self.clear_from(Step::Cluster);
        self.clusters = Some(ranked.clone());
        Ok(StepOutput::Cluster { clusters: ranked })
    }

    fn step_pairs(&mut self, params: &Value) -> Result<StepOutput> {
        let p: PairsParams = parse_params(Step::Pairs, params)?;
        let clusters = self
            .clusters
            .as_ref()
            .ok_or_else(|| out_of_order(Step::Pairs, "cluster"))?;
        let cluster = match &p.cluster {
            Some(id) => clusters
                .iter()
                .find(|c| &c.id == id)
                .ok_or_else(|| RiskError::InvalidParameter(format!("unknown cluster `{id}`")))?,
            None => clusters
                .iter()
                .find(|c| c.members.len() >= 2)
                .ok_or(RiskError::InsufficientMembers(1))?,
        };
        let refs = cluster
            .members
            .iter()
            .map(|id| Ok(TableRef::new(id, self.workbench.table(id)?)))
            .collect::<Result<Vec<_>>>()?;
        let pairs = rank_pairs(
            &refs,
            self.workbench.dictionary(),
            DEFAULT_MAX_KEY_ATTRS,
            Some(&self.cancel),
        )?;
        let cluster_id = cluster.id.clone();
        let pair_count = pairs.len() as u64;
        self.clear_from(Step::Pairs);
        self.selected_cluster = Some(cluster_id.clone());
        self.pairs = Some(pairs.clone());
        Ok(StepOutput::Pairs {
            cluster: cluster_id,
            pair_count,
            pairs,
        })
    }

    fn step_join(&mut self, params: &Value) -> Result<StepOutput> {
        let p: JoinParams = parse_params(Step::Join, params)?;
        let pairs = self
            .pairs
            .as_ref()
            .ok_or_else(|| out_of_order(Step::Join, "pairs"))?;
        let (left, right, ranked_key) = match (&p.left, &p.right) {
            (Some(l), Some(r)) => {
                let ranked = pairs.iter().find(|x| {
                    (&x.left == l && &x.right == r) || (&x.left == r && &x.right == l)
                });
                let Some(ranked) = ranked else {
                    return Err(RiskError::InvalidParameter(format!(
                        "`{l}` and `{r}` are not a pair of the selected cluster"
                    )));
                };
                (l.clone(), r.clone(), ranked.spec.as_ref().map(|s| s.key_attrs.clone()))
            }
            (None, None) => match &self.selected_pair {
                Some((l, r)) => {
                    let key = self.last_result.as_ref().map(|x| x.spec.key_attrs.clone());
                    (l.clone(), r.clone(), key)
                }
                None => return Err(out_of_order(Step::Join, "pair")),
            },
            _ => {
                return Err(RiskError::InvalidParameter(
                    "join needs both `left` and `right` or neither".into(),
                ))
            }
        };
        let wb = Arc::clone(&self.workbench);
        let a = wb.table(&left)?;
        let b = wb.table(&right)?;
        let dict = wb.dictionary();
        let key = match (p.key, ranked_key) {
            (Some(k), _) => k,
            (None, Some(k)) => k,
            (None, None) => auto_join_key(a, b, dict, DEFAULT_MAX_KEY_ATTRS)?,
        };
        let spec = JoinSpec::new(left.clone(), right.clone(), &key, a, b)?;
        let row_cap = p.row_cap.unwrap_or(DEFAULT_JOIN_ROW_CAP);
        if row_cap == 0 {
            return Err(RiskError::InvalidParameter("row_cap must be positive".into()));
        }
        self.cancel.check()?;
        let result = execute_join(a, b, &spec, row_cap)?;
        let score = joinability_risk(a, b, &spec.key_attrs)?;
        let shared = shared_attribute_details(a, b, dict)?;
        let unused_shared = unused_shared(&shared, &spec);
        let output = JoinStepOutput {
            spec: spec.clone(),
            score,
            matched_keys: result.matches.len(),
            total_joined: result.total_joined,
            truncated: result.truncated,
            shared,
            unused_shared,
        };
        self.clear_from(Step::Join);
        self.selected_pair = Some((left, right));
        self.last_result = Some(result);
        Ok(StepOutput::Join(output))
    }

    fn joined_tables(&self, step: Step) -> Result<(&JoinResult, Arc<Workbench>)> {
        let result = self
            .last_result
            .as_ref()
            .ok_or_else(|| out_of_order(step, "join"))?;
        Ok((result, Arc::clone(&self.workbench)))
    }

    fn step_suggest(&mut self, params: &Value) -> Result<StepOutput> {
        let _: EmptyParams = parse_params(Step::Suggest, params)?;
        let (result, wb) = self.joined_tables(Step::Suggest)?;
        let a = wb.table(&result.spec.left_id)?;
        let b = wb.table(&result.spec.right_id)?;
        let shared = shared_attribute_details(a, b, wb.dictionary())?;
        let unused = unused_shared(&shared, &result.spec);
        let suggestions = suggest_features(result, &unused, a, b)?;
        self.suggestions = Some(suggestions.clone());
        Ok(StepOutput::Suggest { suggestions })
    }

    fn step_parallel_sets(&mut self, params: &Value) -> Result<StepOutput> {
        let p: ParallelSetsParams = parse_params(Step::ParallelSets, params)?;
        let (result, wb) = self.joined_tables(Step::ParallelSets)?;
        let a = wb.table(&result.spec.left_id)?;
        let b = wb.table(&result.spec.right_id)?;
        let model = parallel_sets_model(
            result,
            a,
            b,
            &p.axes,
            p.max_categories.unwrap_or(DEFAULT_MAX_CATEGORIES),
        )?;
        self.parallel_sets = Some(model.clone());
        Ok(StepOutput::ParallelSets(model))
    }

    fn step_disclosures(&mut self, params: &Value) -> Result<StepOutput> {
        let _: EmptyParams = parse_params(Step::Disclosures, params)?;
        let (result, wb) = self.joined_tables(Step::Disclosures)?;
        let a = wb.table(&result.spec.left_id)?;
        let b = wb.table(&result.spec.right_id)?;
        let candidates = detect_disclosures(result, a, b, wb.dictionary());
        let output = StepOutput::Disclosures {
            counts: count_candidates(&candidates),
            candidates: redact_candidates(&candidates, Redaction::Masked),
        };
        self.disclosures = Some(candidates);
        Ok(output)
    }

    fn reported_pair(&self) -> Option<ReportedPair> {
        self.selected_pair.as_ref().map(|(l, r)| ReportedPair {
            left: l.clone(),
            right: r.clone(),
        })
    }

    /// Builds the findings document. Requires a disclosures step.
    pub fn export_report(&self, redaction: Redaction) -> Result<ReportDocument> {
        let candidates = self.disclosures.as_ref().ok_or(RiskError::NothingToReport)?;
        let join = self.last_result.as_ref().map(|r| {
            let wb = &self.workbench;
            let score = match (wb.table(&r.spec.left_id), wb.table(&r.spec.right_id)) {
                (Ok(a), Ok(b)) => joinability_risk(a, b, &r.spec.key_attrs).unwrap_or_default(),
                _ => JoinabilityScore::default(),
            };
            ReportedJoin {
                spec: r.spec.clone(),
                score,
                matched_keys: r.matches.len(),
                total_joined: r.total_joined,
                truncated: r.truncated,
            }
        });
        Ok(ReportDocument {
            collection: self.workbench.reference().manifest.clone(),
            redacted: redaction.is_masked(),
            selected_qis: self.selected_qis.clone(),
            selected_cluster: self.selected_cluster.clone(),
            selected_pair: self.reported_pair(),
            join,
            candidate_counts: count_candidates(candidates),
            candidates: redact_candidates(candidates, redaction),
            steps: self
                .history
                .iter()
                .filter(|h| h.step != "created")
                .map(|h| ReportedStep {
                    step: h.step.clone(),
                    params: h.params.clone(),
                })
                .collect(),
        })
    }
}

fn unused_shared(shared: &[SharedAttribute], spec: &JoinSpec) -> Vec<String> {
    let mut unused: Vec<&SharedAttribute> = shared
        .iter()
        .filter(|s| !spec.key_attrs.contains(&s.name))
        .collect();
    unused.sort_by(|x, y| {
        let qx = x.semantic_class != SemanticClass::QuasiIdentifier;
        let qy = y.semantic_class != SemanticClass::QuasiIdentifier;
        qx.cmp(&qy).then_with(|| x.name.cmp(&y.name))
    });
    unused.into_iter().map(|s| s.name.clone()).collect()
}

/// A session rebuilt from its history together with the output of every
/// replayed step, in order.
#[derive(Debug)]
pub struct ReplayOutcome {
    pub session: DefenderSession,
    pub outputs: Vec<StepOutput>,
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryEntry>> {
    if !path.is_file() {
        return Err(RiskError::UnknownSession(path.display().to_string()));
    }
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Rebuilds the workbench named in the history's first entry and re-runs
/// every recorded selection and step.
pub fn replay_history(path: &Path, dict: QuasiIdentifierDictionary) -> Result<ReplayOutcome> {
    let entries = read_history(path)?;
    let first = entries
        .first()
        .filter(|e| e.step == "created")
        .ok_or_else(|| RiskError::InvalidParameter("history does not start with `created`".into()))?;
    let reference: CollectionRef = serde_json::from_value(first.params.clone())
        .map_err(|e| RiskError::InvalidParameter(format!("created entry: {e}")))?;
    let workbench = Arc::new(Workbench::open(reference, dict)?);
    replay_entries(workbench, &entries[1..])
}

pub fn replay_entries(workbench: Arc<Workbench>, entries: &[HistoryEntry]) -> Result<ReplayOutcome> {
    let mut session = DefenderSession::new(workbench);
    let mut outputs = Vec::new();
    for entry in entries {
        if entry.step == "qis" {
            let selection: QiSelection = serde_json::from_value(entry.params.clone())
                .map_err(|e| RiskError::InvalidParameter(format!("qis entry: {e}")))?;
            session.set_quasi_identifiers(selection)?;
        } else {
            let step: Step = entry.step.parse()?;
            outputs.push(session.run_step(&StepRequest::new(step, entry.params.clone()))?);
        }
    }
    Ok(ReplayOutcome { session, outputs })
}
