use serde::{Deserialize, Serialize};

use crate::join::{DisclosureCandidate, DisclosureKind, JoinSpec, JoinabilityScore};

/// Proof that the caller accepted the risk of exporting raw cell values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RiskAcknowledgment(());

impl RiskAcknowledgment {
    pub fn i_understand_risk() -> Self {
        RiskAcknowledgment(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Redaction {
    Masked,
    Unmasked(RiskAcknowledgment),
}

impl Redaction {
    pub fn is_masked(self) -> bool {
        matches!(self, Redaction::Masked)
    }
}

/// Coarsens dates to their month (`2015-02-24T01:00` → `2015-02`,
/// `02/24/2015` → `02/2015`); any other value keeps its first character
/// and the rest becomes `X`.
pub fn mask_value(value: &str) -> String {
    if let Some(month) = iso_month(value) {
        return month;
    }
    if let Some(month) = us_month(value) {
        return month;
    }
    let mut chars = value.chars();
    match chars.next() {
        None => String::new(),
        Some(first) => {
            let mut out = String::with_capacity(value.len());
            out.push(first);
            out.extend(chars.map(|_| 'X'));
            out
        }
    }
}

fn all_digits(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

fn iso_month(v: &str) -> Option<String> {
    let b = v.as_bytes();
    if b.len() >= 10 && all_digits(&v[0..4]) && b[4] == b'-' && all_digits(&v[5..7]) && b[7] == b'-' && all_digits(&v[8..10]) {
        Some(v[..7].to_string())
    } else {
        None
    }
}

fn us_month(v: &str) -> Option<String> {
    let date = v.split_whitespace().next()?;
    let parts: Vec<&str> = date.split('/').collect();
    if parts.len() == 3
        && parts[0].len() <= 2
        && parts[1].len() <= 2
        && parts[2].len() == 4
        && parts.iter().all(|p| all_digits(p))
    {
        Some(format!("{}/{}", parts[0], parts[2]))
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportedPair {
    pub left: String,
    pub right: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportedJoin {
    pub spec: JoinSpec,
    pub score: JoinabilityScore,
    pub matched_keys: usize,
    pub total_joined: u64,
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateCounts {
    pub identity: usize,
    pub attribute: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportedStep {
    pub step: String,
    pub params: serde_json::Value,
}

/// Exported findings of one session. Contains no timestamps or session
/// ids, so identical parameters give byte-identical documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub collection: String,
    pub redacted: bool,
    pub selected_qis: Vec<String>,
    pub selected_cluster: Option<String>,
    pub selected_pair: Option<ReportedPair>,
    pub join: Option<ReportedJoin>,
    pub candidate_counts: CandidateCounts,
    pub candidates: Vec<DisclosureCandidate>,
    pub steps: Vec<ReportedStep>,
}

impl ReportDocument {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub fn redact_candidates(
    candidates: &[DisclosureCandidate],
    redaction: Redaction,
) -> Vec<DisclosureCandidate> {
    if !redaction.is_masked() {
        return candidates.to_vec();
    }
    candidates
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.key = c.key.iter().map(|v| mask_value(v)).collect();
            for r in &mut c.revealed {
                r.value = mask_value(&r.value);
            }
            c
        })
        .collect()
}

pub fn count_candidates(candidates: &[DisclosureCandidate]) -> CandidateCounts {
    CandidateCounts {
        identity: candidates
            .iter()
            .filter(|c| c.kind == DisclosureKind::Identity)
            .count(),
        attribute: candidates
            .iter()
            .filter(|c| c.kind == DisclosureKind::Attribute)
            .count(),
    }
}
