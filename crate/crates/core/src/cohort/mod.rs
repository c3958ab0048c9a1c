//! Metadata catalogs: parsing, T1w keyword selection, slice-count filtering and
//! the gadolinium keyword audit.

mod audit;
mod catalog;
mod rules;

use thiserror::Error;

pub use audit::{audit_gadolinium_keywords, AuditFlag, ContingencyTable, GadoliniumAudit};
pub use catalog::{parse_catalog, Catalog, CatalogFormat, MalformedRow};
pub use rules::{filter_min_slices, select_t1w, KeywordRules, DEFAULT_MIN_SLICES};

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("catalog has no parseable rows ({} malformed)", .0.len())]
    EmptyCatalog(Vec<MalformedRow>),
    #[error("image_id {id:?} appears on lines {first} and {second}")]
    DuplicateImageId { id: String, first: usize, second: usize },
    #[error("CSV header is missing column {0:?}")]
    MissingColumn(String),
    #[error("image_id {0:?} is not in the catalog")]
    UnknownImageId(String),
    #[error("keyword rules: {0}")]
    InvalidRules(String),
    #[error("catalog: {0}")]
    Read(String),
}
