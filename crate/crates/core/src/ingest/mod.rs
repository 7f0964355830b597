//! Feature schemas, patient records and synthetic cohorts.

mod record;
mod schema;
mod synthetic;

use alloc::string::String;

use chrono::NaiveDate;
use thiserror::Error;

pub use record::{Dataset, FeatureValue, PatientRecord};
pub use schema::{FeatureKind, FeatureSpec, Schema, SchemaError};
pub use synthetic::{gen_synthetic, PlantedEffect, PlantedRule, RECORDS_PER_PATIENT};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("row {row}: bad value for {feature:?}: {reason}")]
    BadValue {
        row: usize,
        feature: String,
        reason: String,
    },
    #[error("dataset has no records")]
    EmptyDataset,
    #[error("row {row}: duplicate observation for patient {patient_id:?} on {timestamp}")]
    DuplicateObservation {
        row: usize,
        patient_id: String,
        timestamp: NaiveDate,
    },
    #[error("test fraction {0} must lie strictly between 0 and 1 with at least two patients")]
    BadSplit(f64),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}
