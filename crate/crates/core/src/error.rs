use thiserror::Error;

pub type Result<T, E = RiskError> = std::result::Result<T, E>;

/// Every failure the engine can report. Variant names double as the
/// machine-readable error codes used by the HTTP API and the CLI.
#[derive(Debug, Error)]
pub enum RiskError {
    #[error("'{name}' is already classified as {existing}, refusing to reclassify as {requested}")]
    ConflictingClassification {
        name: String,
        existing: String,
        requested: String,
    },
    #[error("profile has no members")]
    EmptyProfile,
    #[error("attribute name '{0}' normalizes to an empty string")]
    InvalidAttributeName(String),
    #[error("invalid quasi-identifier dictionary: {0}")]
    InvalidDictionary(String),

    #[error("network failure: {0}")]
    NetworkFailure(String),
    #[error("malformed catalog: {0}")]
    MalformedCatalog(String),
    #[error("unknown portal '{0}'")]
    UnknownPortal(String),
    #[error("dataset '{0}' is not tabular")]
    NotTabular(String),
    #[error("row {row} has {found} cells, expected {expected}")]
    RowSchemaMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("duplicate attribute '{0}'")]
    DuplicateAttribute(String),

    #[error("unknown dataset '{0}'")]
    UnknownDataset(String),
    #[error("invalid label: {0}")]
    InvalidLabel(String),
    #[error("{0} qi-filtered entries are still undecided")]
    IncompleteLabeling(usize),

    #[error("unknown attribute '{0}'")]
    UnknownAttribute(String),
    #[error("table has no rows")]
    EmptyTable,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("collection is empty")]
    EmptyCollection,

    #[error("datasets share no attributes")]
    NoSharedAttributes,
    #[error("at least two members with tables are required, got {0}")]
    InsufficientMembers(usize),
    #[error("join produced {produced} rows, cap is {cap}")]
    ResultTooLarge { produced: u64, cap: usize },

    #[error("unknown collection '{0}'")]
    UnknownCollection(String),
    #[error("unknown profile '{0}'")]
    UnknownProfile(String),
    #[error("empty quasi-identifier selection")]
    EmptySelection,
    #[error("step '{step}' requires {missing}")]
    StepOutOfOrder { step: String, missing: String },
    #[error("join result is empty")]
    EmptyResult,
    #[error("no disclosures step has run in this session")]
    NothingToReport,
    #[error("unknown session '{0}'")]
    UnknownSession(String),
    #[error("operation cancelled")]
    Cancelled,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl RiskError {
    pub fn code(&self) -> &'static str {
        match self {
            RiskError::ConflictingClassification { .. } => "ConflictingClassification",
            RiskError::EmptyProfile => "EmptyProfile",
            RiskError::InvalidAttributeName(_) => "InvalidAttributeName",
            RiskError::InvalidDictionary(_) => "InvalidDictionary",
            RiskError::NetworkFailure(_) => "NetworkFailure",
            RiskError::MalformedCatalog(_) => "MalformedCatalog",
            RiskError::UnknownPortal(_) => "UnknownPortal",
            RiskError::NotTabular(_) => "NotTabular",
            RiskError::RowSchemaMismatch { .. } => "RowSchemaMismatch",
            RiskError::DuplicateAttribute(_) => "DuplicateAttribute",
            RiskError::UnknownDataset(_) => "UnknownDataset",
            RiskError::InvalidLabel(_) => "InvalidLabel",
            RiskError::IncompleteLabeling(_) => "IncompleteLabeling",
            RiskError::UnknownAttribute(_) => "UnknownAttribute",
            RiskError::EmptyTable => "EmptyTable",
            RiskError::InvalidParameter(_) => "InvalidParameter",
            RiskError::EmptyCollection => "EmptyCollection",
            RiskError::NoSharedAttributes => "NoSharedAttributes",
            RiskError::InsufficientMembers(_) => "InsufficientMembers",
            RiskError::ResultTooLarge { .. } => "ResultTooLarge",
            RiskError::UnknownCollection(_) => "UnknownCollection",
            RiskError::UnknownProfile(_) => "UnknownProfile",
            RiskError::EmptySelection => "EmptySelection",
            RiskError::StepOutOfOrder { .. } => "StepOutOfOrder",
            RiskError::EmptyResult => "EmptyResult",
            RiskError::NothingToReport => "NothingToReport",
            RiskError::UnknownSession(_) => "UnknownSession",
            RiskError::Cancelled => "Cancelled",
            RiskError::Io(_) => "Io",
            RiskError::Json(_) => "Json",
            RiskError::Csv(_) => "Csv",
        }
    }

    /// Whether retrying the same call may succeed.
    pub fn is_retryable(&self) -> bool {
        matches!(self, RiskError::NetworkFailure(_))
    }
}
