//! Attribute-name normalization and the quasi-identifier dictionary.
//!
//! Attributes from different portals are compared by their normalized
//! name only. The dictionary maps normalized names to a [`SemanticClass`],
//! resolves aliases through a synonym table, and carries named
//! background-knowledge profiles (ordered lists of terms).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RiskError};

/// Environment variable consulted when no `--qi-dict` path is given.
pub const QI_DICT_ENV: &str = "RISKCAL_QI_DICT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SemanticClass {
    QuasiIdentifier,
    DirectIdentifier,
    Sensitive,
    Linking,
    Other,
}

impl SemanticClass {
    pub fn as_str(self) -> &'static str {
        match self {
            SemanticClass::QuasiIdentifier => "quasi-identifier",
            SemanticClass::DirectIdentifier => "direct-identifier",
            SemanticClass::Sensitive => "sensitive",
            SemanticClass::Linking => "linking",
            SemanticClass::Other => "other",
        }
    }
}

impl fmt::Display for SemanticClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueKind {
    Categorical,
    Numeric,
    Date,
    FreeText,
}

impl ValueKind {
    /// Maps a catalog column datatype ("text", "number", "calendar_date", ...).
    pub fn from_catalog_type(datatype: &str) -> ValueKind {
        match normalize_attribute(datatype).as_str() {
            "number" | "numeric" | "integer" | "double" | "money" | "percent" => ValueKind::Numeric,
            "calendar date" | "date" | "datetime" | "floating timestamp" | "fixed timestamp" => {
                ValueKind::Date
            }
            "free text" | "long text" | "html" => ValueKind::FreeText,
            _ => ValueKind::Categorical,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDescriptor {
    pub raw_name: String,
    pub normalized_name: String,
    pub semantic_class: SemanticClass,
    pub value_kind: ValueKind,
}

impl AttributeDescriptor {
    pub fn new(
        raw_name: &str,
        value_kind: ValueKind,
        dict: &QuasiIdentifierDictionary,
    ) -> Result<Self> {
        let normalized_name = normalize_attribute(raw_name);
        if normalized_name.is_empty() {
            return Err(RiskError::InvalidAttributeName(raw_name.to_string()));
        }
        let semantic_class = classify_attribute(&normalized_name, dict);
        Ok(AttributeDescriptor {
            raw_name: raw_name.to_string(),
            normalized_name,
            semantic_class,
            value_kind,
        })
    }
}

/// Lowercases, turns every non-alphanumeric character into a space,
/// collapses whitespace runs and trims.
pub fn normalize_attribute(raw: &str) -> String {
    let mapped: String = raw
        .chars()
        .flat_map(|c| {
            if c.is_alphanumeric() {
                c.to_lowercase().collect::<Vec<_>>()
            } else {
                vec![' ']
            }
        })
        .collect();
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Resolves synonyms, then looks the term up. Absent terms are `Other`.
pub fn classify_attribute(normalized: &str, dict: &QuasiIdentifierDictionary) -> SemanticClass {
    dict.terms
        .get(dict.resolve(normalized))
        .copied()
        .unwrap_or(SemanticClass::Other)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuasiIdentifierDictionary {
    pub terms: BTreeMap<String, SemanticClass>,
    #[serde(default)]
    pub synonyms: BTreeMap<String, String>,
    #[serde(default)]
    pub profiles: BTreeMap<String, Vec<String>>,
}

/// One entry for [`QuasiIdentifierDictionary::expand`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictionaryAddition {
    pub name: String,
    pub class: SemanticClass,
    #[serde(default)]
    pub override_existing: bool,
}

impl DictionaryAddition {
    pub fn new(name: impl Into<String>, class: SemanticClass) -> Self {
        DictionaryAddition {
            name: name.into(),
            class,
            override_existing: false,
        }
    }

    pub fn overriding(mut self) -> Self {
        self.override_existing = true;
        self
    }
}

const SEED_QUASI_IDENTIFIERS: [&str; 4] = ["age", "sex", "race", "age group"];

/// Background-knowledge profile for police datasets.
pub const POLICE_PROFILE: [&str; 6] = [
    "victim age",
    "victim gender",
    "victim race",
    "offender age",
    "offender gender",
    "location",
];

impl QuasiIdentifierDictionary {
    /// The four seed quasi-identifiers and nothing else.
    pub fn seed() -> Self {
        QuasiIdentifierDictionary {
            terms: SEED_QUASI_IDENTIFIERS
                .iter()
                .map(|t| (t.to_string(), SemanticClass::QuasiIdentifier))
                .collect(),
            synonyms: BTreeMap::new(),
            profiles: BTreeMap::new(),
        }
    }

    /// Curated default shipped with the tool: the seed terms, the police
    /// profile terms, common identifiers, sensitive and linking columns.
    pub fn builtin() -> Self {
        use SemanticClass::*;
        let mut terms: BTreeMap<String, SemanticClass> = BTreeMap::new();
        let groups: [(SemanticClass, &[&str]); 4] = [
            (
                QuasiIdentifier,
                &[
                    "age",
                    "sex",
                    "race",
                    "age group",
                    "ethnicity",
                    "date of birth",
                    "zip code",
                    "location",
                    "neighborhood",
                    "neighborhoodxy",
                    "victim age",
                    "victim gender",
                    "victim race",
                    "offender age",
                    "offender gender",
                    "offender race",
                    "marital status",
                    "language",
                ],
            ),
            (
                DirectIdentifier,
                &[
                    "name",
                    "first name",
                    "last name",
                    "full name",
                    "ssn",
                    "phone number",
                    "email",
                    "street address",
                ],
            ),
            (
                Sensitive,
                &[
                    "charge",
                    "arrest charge",
                    "offense",
                    "violation",
                    "disposition",
                    "signal description",
                    "diagnosis",
                    "income",
                    "health condition",
                ],
            ),
            (
                Linking,
                &[
                    "case id",
                    "case number",
                    "incident number",
                    "item number",
                    "report number",
                ],
            ),
        ];
        for (class, names) in groups {
            for name in names {
                terms.insert(name.to_string(), class);
            }
        }
        let synonyms = [
            ("gender", "sex"),
            ("dob", "date of birth"),
            ("birth date", "date of birth"),
            ("zip", "zip code"),
            ("zipcode", "zip code"),
            ("postal code", "zip code"),
            ("case no", "case number"),
        ]
        .iter()
        .map(|(a, c)| (a.to_string(), c.to_string()))
        .collect();
        let profiles = BTreeMap::from([(
            "police".to_string(),
            POLICE_PROFILE.iter().map(|s| s.to_string()).collect(),
        )]);
        QuasiIdentifierDictionary {
            terms,
            synonyms,
            profiles,
        }
    }

    /// Reads a JSON dictionary document and validates it. Keys are
    /// normalized on load.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: QuasiIdentifierDictionary = serde_json::from_str(text)
            .map_err(|e| RiskError::InvalidDictionary(e.to_string()))?;
        let mut dict = QuasiIdentifierDictionary {
            terms: BTreeMap::new(),
            synonyms: BTreeMap::new(),
            profiles: BTreeMap::new(),
        };
        for (name, class) in raw.terms {
            let norm = normalize_attribute(&name);
            if norm.is_empty() {
                return Err(RiskError::InvalidDictionary(format!("empty term '{name}'")));
            }
            dict.terms.insert(norm, class);
        }
        for (alias, target) in raw.synonyms {
            dict.synonyms
                .insert(normalize_attribute(&alias), normalize_attribute(&target));
        }
        for (name, members) in raw.profiles {
            dict.profiles.insert(
                name,
                members.iter().map(|m| normalize_attribute(m)).collect(),
            );
        }
        dict.validate()?;
        Ok(dict)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Path from the explicit flag, else `RISKCAL_QI_DICT`, else the builtin.
    pub fn load_configured(flag: Option<&Path>) -> Result<Self> {
        match flag {
            Some(p) => Self::load(p),
            None => match std::env::var_os(QI_DICT_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::builtin()),
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dictionary serializes")
    }

    pub fn validate(&self) -> Result<()> {
        for (alias, target) in &self.synonyms {
            if !self.terms.contains_key(target) {
                return Err(RiskError::InvalidDictionary(format!(
                    "synonym '{alias}' points at unknown term '{target}'"
                )));
            }
        }
        for (name, members) in &self.profiles {
            for m in members {
                if !self.terms.contains_key(self.resolve(m)) {
                    return Err(RiskError::InvalidDictionary(format!(
                        "profile '{name}' member '{m}' is not a term"
                    )));
                }
            }
        }
        for seed in SEED_QUASI_IDENTIFIERS {
            if self.terms.get(seed) != Some(&SemanticClass::QuasiIdentifier) {
                return Err(RiskError::InvalidDictionary(format!(
                    "seed quasi-identifier '{seed}' missing"
                )));
            }
        }
        Ok(())
    }

    /// Canonical name for a normalized term.
    pub fn resolve<'a>(&'a self, normalized: &'a str) -> &'a str {
        self.synonyms
            .get(normalized)
            .map(String::as_str)
            .unwrap_or(normalized)
    }

    pub fn classify(&self, normalized: &str) -> SemanticClass {
        classify_attribute(normalized, self)
    }

    pub fn quasi_identifiers(&self) -> BTreeSet<&str> {
        self.terms
            .iter()
            .filter(|(_, c)| **c == SemanticClass::QuasiIdentifier)
            .map(|(t, _)| t.as_str())
            .collect()
    }

    pub fn profile(&self, name: &str) -> Result<&[String]> {
        self.profiles
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| RiskError::UnknownProfile(name.to_string()))
    }

    /// Returns a new dictionary with `additions` merged in.
    pub fn expand(&self, additions: &[DictionaryAddition]) -> Result<Self> {
        let mut next = self.clone();
        for add in additions {
            let norm = normalize_attribute(&add.name);
            if norm.is_empty() {
                return Err(RiskError::InvalidAttributeName(add.name.clone()));
            }
            let canonical = next.resolve(&norm).to_string();
            match next.terms.get(&canonical) {
                Some(existing) if *existing != add.class && !add.override_existing => {
                    return Err(RiskError::ConflictingClassification {
                        name: canonical,
                        existing: existing.to_string(),
                        requested: add.class.to_string(),
                    });
                }
                _ => {
                    next.terms.insert(canonical, add.class);
                }
            }
        }
        Ok(next)
    }
}

impl Default for QuasiIdentifierDictionary {
    fn default() -> Self {
        Self::builtin()
    }
}

pub fn expand_dictionary(
    dict: &QuasiIdentifierDictionary,
    additions: &[DictionaryAddition],
) -> Result<QuasiIdentifierDictionary> {
    dict.expand(additions)
}

/// Fraction of the (deduplicated, normalized) profile present among the
/// attributes' normalized names.
pub fn profile_coverage<S: AsRef<str>>(
    attrs: &[AttributeDescriptor],
    profile: &[S],
) -> Result<f64> {
    let wanted: BTreeSet<String> = profile
        .iter()
        .map(|p| normalize_attribute(p.as_ref()))
        .filter(|p| !p.is_empty())
        .collect();
    if wanted.is_empty() {
        return Err(RiskError::EmptyProfile);
    }
    let present: BTreeSet<&str> = attrs.iter().map(|a| a.normalized_name.as_str()).collect();
    let hit = wanted.iter().filter(|w| present.contains(w.as_str())).count();
    Ok(hit as f64 / wanted.len() as f64)
}
