use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::schema::Schema;
use super::IngestError;

/// A feature value: a number for continuous features, a label for
/// categorical ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureValue {
    Number(f64),
    Label(String),
}

impl FeatureValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Self::Number(x) => Some(*x),
            Self::Label(_) => None,
        }
    }

    pub fn as_label(&self) -> Option<&str> {
        match self {
            Self::Label(s) => Some(s),
            Self::Number(_) => None,
        }
    }
}

impl From<f64> for FeatureValue {
    fn from(x: f64) -> Self {
        Self::Number(x)
    }
}

impl From<&str> for FeatureValue {
    fn from(s: &str) -> Self {
        Self::Label(s.into())
    }
}

impl fmt::Display for FeatureValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Number(x) => write!(f, "{x}"),
            Self::Label(s) => f.write_str(s),
        }
    }
}

/// One dated observation of a patient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub timestamp: NaiveDate,
    pub values: BTreeMap<String, FeatureValue>,
    /// Outcome; present on training data only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<bool>,
}

impl PatientRecord {
    pub fn value(&self, feature: &str) -> Option<&FeatureValue> {
        self.values.get(feature)
    }

    pub fn number(&self, feature: &str) -> Option<f64> {
        self.values.get(feature).and_then(FeatureValue::as_number)
    }

    pub fn label_of(&self, feature: &str) -> Option<&str> {
        self.values.get(feature).and_then(FeatureValue::as_label)
    }

    /// Returns `(feature, reason)` for the first violation.
    pub fn validate(&self, schema: &Schema) -> Result<(), (String, String)> {
        for spec in schema.features() {
            match self.values.get(&spec.name) {
                None => return Err((spec.name.clone(), "missing value".into())),
                Some(v) => spec.check_value(v).map_err(|r| (spec.name.clone(), r))?,
            }
        }
        if let Some(extra) = self.values.keys().find(|k| schema.get(k).is_none()) {
            return Err((extra.clone(), "feature not in schema".into()));
        }
        Ok(())
    }
}

/// Validated records plus the schema they were checked against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    schema: Schema,
    records: Vec<PatientRecord>,
}

impl Dataset {
    /// Validates every record and the uniqueness of `(patient_id, timestamp)`.
    /// Row numbers in errors are 1-based data rows.
    pub fn new(schema: Schema, records: Vec<PatientRecord>) -> Result<Self, IngestError> {
        if records.is_empty() {
            return Err(IngestError::EmptyDataset);
        }
        let mut seen = BTreeSet::new();
        for (i, r) in records.iter().enumerate() {
            r.validate(&schema)
                .map_err(|(feature, reason)| IngestError::BadValue {
                    row: i + 1,
                    feature,
                    reason,
                })?;
            if !seen.insert((r.patient_id.as_str(), r.timestamp)) {
                return Err(IngestError::DuplicateObservation {
                    row: i + 1,
                    patient_id: r.patient_id.clone(),
                    timestamp: r.timestamp,
                });
            }
        }
        Ok(Self { schema, records })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn records(&self) -> &[PatientRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Patient ids in order of first appearance.
    pub fn patient_ids(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.patient_id.as_str()))
            .map(|r| r.patient_id.as_str())
            .collect()
    }

    /// All records of one patient, oldest first.
    pub fn history(&self, patient_id: &str) -> Vec<&PatientRecord> {
        let mut out: Vec<_> = self
            .records
            .iter()
            .filter(|r| r.patient_id == patient_id)
            .collect();
        out.sort_by_key(|r| r.timestamp);
        out
    }

    pub fn latest(&self, patient_id: &str) -> Option<&PatientRecord> {
        self.records
            .iter()
            .filter(|r| r.patient_id == patient_id)
            .max_by_key(|r| r.timestamp)
    }

    /// Latest record per patient, in order of first appearance.
    pub fn latest_per_patient(&self) -> Vec<&PatientRecord> {
        let mut latest: BTreeMap<&str, &PatientRecord> = BTreeMap::new();
        for r in &self.records {
            latest
                .entry(r.patient_id.as_str())
                .and_modify(|cur| {
                    if r.timestamp > cur.timestamp {
                        *cur = r;
                    }
                })
                .or_insert(r);
        }
        self.patient_ids()
            .into_iter()
            .map(|id| latest[id])
            .collect()
    }

    /// Splits by patient so that no patient lands on both sides. Record
    /// order inside each side follows the source order.
    pub fn split_by_patient(
        &self,
        test_fraction: f64,
        seed: u64,
    ) -> Result<(Dataset, Dataset), IngestError> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(IngestError::BadSplit(test_fraction));
        }
        let mut ids = self.patient_ids();
        if ids.len() < 2 {
            return Err(IngestError::BadSplit(test_fraction));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ids.shuffle(&mut rng);
        let n_test = ((ids.len() as f64 * test_fraction) as usize).clamp(1, ids.len() - 1);
        let test_ids: BTreeSet<&str> = ids[..n_test].iter().copied().collect();
        let (test, train): (Vec<_>, Vec<_>) = self
            .records
            .iter()
            .cloned()
            .partition(|r| test_ids.contains(r.patient_id.as_str()));
        Ok((
            Dataset {
                schema: self.schema.clone(),
                records: train,
            },
            Dataset {
                schema: self.schema.clone(),
                records: test,
            },
        ))
    }
}
