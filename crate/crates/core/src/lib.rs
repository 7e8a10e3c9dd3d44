//! Disclosure-risk calibration for open tabular data: harvest portal
//! catalogs, curate a human-subject collection, measure re-identification
//! risk within and across datasets, and walk a defender through the
//! cluster → pair → join → disclosure workflow.

pub mod cancel;
pub mod catalog;
pub mod cluster;
pub mod curation;
pub mod error;
pub mod join;
pub mod metrics;
pub mod qi;
pub mod table;
pub mod workflow;

pub use cancel::CancelToken;
pub use error::{Result, RiskError};
pub use qi::{AttributeDescriptor, QuasiIdentifierDictionary, SemanticClass, ValueKind};
pub use table::RecordTable;
