//! Logistic-regression risk model.
//!
//! Continuous features are standardized with training statistics. Categorical
//! features are one-hot encoded with the first category as the dropped
//! reference level, so a feature with `m` categories spans `m - 1` columns.

mod fit;
mod risk;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Dataset, FeatureKind, FeatureValue, PatientRecord, Schema};
use crate::math::{dot, sigmoid};

pub use fit::{fit, fit_traced, Hyperparameters};
pub use risk::{bucket_risk, RiskLevel, RiskPrediction};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("training data contains a single outcome class")]
    SingleClass,
    #[error("feature {0:?} is constant in the training data")]
    ConstantFeature(String),
    #[error("optimization diverged")]
    NonFinite,
    #[error("dataset has no records")]
    EmptyDataset,
    #[error("dataset has unlabeled records")]
    UnlabeledData,
    #[error("record does not match the model schema: {0}")]
    SchemaMismatch(String),
    #[error("schema fingerprint {found} does not match model fingerprint {expected}")]
    SchemaHashMismatch { expected: String, found: String },
    #[error("probability {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("unknown risk level {0:?}")]
    UnknownLevel(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeatureEncoding {
    /// `(x - mean) / std_dev`. `data_bounds` holds the training
    /// `[1st, 99th]` percentiles when the model was fitted.
    Standardized {
        mean: f64,
        std_dev: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        data_bounds: Option<[f64; 2]>,
    },
    /// One column per level after the first.
    OneHot { levels: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedFeature {
    pub name: String,
    pub encoding: FeatureEncoding,
}

impl EncodedFeature {
    fn width(&self) -> usize {
        match &self.encoding {
            FeatureEncoding::Standardized { .. } => 1,
            FeatureEncoding::OneHot { levels } => levels.len() - 1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

/// Every field of a trained model, unchecked. Serialized form of
/// [`TrainedModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParts {
    pub features: Vec<EncodedFeature>,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub background_means: Vec<f64>,
    pub metrics: Metrics,
    pub schema_hash: String,
}

/// A frozen logistic-regression model. Immutable once built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelParts", into = "ModelParts")]
pub struct TrainedModel {
    parts: ModelParts,
    columns: Vec<String>,
}

impl TryFrom<ModelParts> for TrainedModel {
    type Error = ModelError;

    fn try_from(parts: ModelParts) -> Result<Self, ModelError> {
        Self::from_parts(parts)
    }
}

impl From<TrainedModel> for ModelParts {
    fn from(m: TrainedModel) -> Self {
        m.parts
    }
}

impl TrainedModel {
    pub fn from_parts(parts: ModelParts) -> Result<Self, ModelError> {
        let invalid = |m: String| Err(ModelError::InvalidModel(m));
        let mut columns = Vec::new();
        for f in &parts.features {
            match &f.encoding {
                FeatureEncoding::Standardized { mean, std_dev, .. } => {
                    if !(mean.is_finite() && std_dev.is_finite() && *std_dev > 0.0) {
                        return invalid(format!("bad standardization for {:?}", f.name));
                    }
                    columns.push(f.name.clone());
                }
                FeatureEncoding::OneHot { levels } => {
                    if levels.len() < 2 {
                        return invalid(format!("{:?} needs at least two levels", f.name));
                    }
                    columns.extend(levels[1..].iter().map(|l| format!("{}={l}", f.name)));
                }
            }
        }
        if parts.weights.len() != columns.len() || parts.background_means.len() != columns.len() {
            return invalid(format!(
                "expected {} weights and background means, got {} and {}",
                columns.len(),
                parts.weights.len(),
                parts.background_means.len()
            ));
        }
        let finite = parts
            .weights
            .iter()
            .chain(&parts.background_means)
            .chain(core::iter::once(&parts.intercept))
            .all(|x| x.is_finite());
        if !finite {
            return invalid("non-finite parameter".into());
        }
        Ok(Self { parts, columns })
    }

    /// Builds a model by hand against `schema`. `standardization` lists
    /// `(mean, std_dev)` for the continuous features in schema order.
    pub fn from_schema(
        schema: &Schema,
        standardization: &[(f64, f64)],
        weights: Vec<f64>,
        intercept: f64,
        background_means: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let mut stats = standardization.iter();
        let mut features = Vec::with_capacity(schema.len());
        for spec in schema.features() {
            let encoding = match spec.kind {
                FeatureKind::Continuous => {
                    let &(mean, std_dev) = stats.next().ok_or_else(|| {
                        ModelError::InvalidModel("too few standardization entries".into())
                    })?;
                    FeatureEncoding::Standardized {
                        mean,
                        std_dev,
                        data_bounds: None,
                    }
                }
                FeatureKind::Categorical => FeatureEncoding::OneHot {
                    levels: spec.categories.clone(),
                },
            };
            features.push(EncodedFeature {
                name: spec.name.clone(),
                encoding,
            });
        }
        if stats.next().is_some() {
            return Err(ModelError::InvalidModel(
                "too many standardization entries".into(),
            ));
        }
        Self::from_parts(ModelParts {
            features,
            weights,
            intercept,
            background_means,
            metrics: Metrics::default(),
            schema_hash: schema.fingerprint(),
        })
    }

    pub fn parts(&self) -> &ModelParts {
        &self.parts
    }

    pub fn weights(&self) -> &[f64] {
        &self.parts.weights
    }

    pub fn intercept(&self) -> f64 {
        self.parts.intercept
    }

    pub fn background_means(&self) -> &[f64] {
        &self.parts.background_means
    }

    pub fn metrics(&self) -> Metrics {
        self.parts.metrics
    }

    pub fn schema_hash(&self) -> &str {
        &self.parts.schema_hash
    }

    pub fn features(&self) -> &[EncodedFeature] {
        &self.parts.features
    }

    /// Encoded column names: the feature name for continuous features,
    /// `name=level` for one-hot columns.
    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    /// Encoded column range of each feature, in feature order.
    pub fn column_spans(&self) -> Vec<(&str, core::ops::Range<usize>)> {
        let mut start = 0;
        self.parts
            .features
            .iter()
            .map(|f| {
                let span = start..start + f.width();
                start = span.end;
                (f.name.as_str(), span)
            })
            .collect()
    }

    /// Training `[1st, 99th]` percentiles of a continuous feature.
    pub fn data_bounds(&self, feature: &str) -> Option<[f64; 2]> {
        self.parts.features.iter().find_map(|f| match &f.encoding {
            FeatureEncoding::Standardized { data_bounds, .. } if f.name == feature => *data_bounds,
            _ => None,
        })
    }

    pub fn check_schema(&self, schema: &Schema) -> Result<(), ModelError> {
        let found = schema.fingerprint();
        if found == self.parts.schema_hash {
            Ok(())
        } else {
            Err(ModelError::SchemaHashMismatch {
                expected: self.parts.schema_hash.clone(),
                found,
            })
        }
    }

    pub fn encode(&self, record: &PatientRecord) -> Result<Vec<f64>, ModelError> {
        let mismatch = |m: String| ModelError::SchemaMismatch(m);
        if record.values.len() != self.parts.features.len() {
            return Err(mismatch(format!(
                "expected {} features, got {}",
                self.parts.features.len(),
                record.values.len()
            )));
        }
        let mut out = Vec::with_capacity(self.dim());
        for f in &self.parts.features {
            let value = record
                .value(&f.name)
                .ok_or_else(|| mismatch(format!("missing feature {:?}", f.name)))?;
            match (&f.encoding, value) {
                (FeatureEncoding::Standardized { mean, std_dev, .. }, FeatureValue::Number(x))
                    if x.is_finite() =>
                {
                    out.push((x - mean) / std_dev);
                }
                (FeatureEncoding::OneHot { levels }, FeatureValue::Label(l)) => {
                    let idx = levels.iter().position(|c| c == l).ok_or_else(|| {
                        mismatch(format!("unknown category {l:?} for {:?}", f.name))
                    })?;
                    out.extend((1..levels.len()).map(|j| if j == idx { 1.0 } else { 0.0 }));
                }
                _ => return Err(mismatch(format!("bad value {value} for {:?}", f.name))),
            }
        }
        Ok(out)
    }

    pub fn logit_encoded(&self, x: &[f64]) -> f64 {
        dot(&self.parts.weights, x) + self.parts.intercept
    }

    /// Log-odds at the background means.
    pub fn base_logit(&self) -> f64 {
        self.logit_encoded(&self.parts.background_means)
    }

    pub fn logit(&self, record: &PatientRecord) -> Result<f64, ModelError> {
        Ok(self.logit_encoded(&self.encode(record)?))
    }

    pub fn predict_proba(&self, record: &PatientRecord) -> Result<f64, ModelError> {
        Ok(sigmoid(self.logit(record)?))
    }

    pub fn predict(&self, record: &PatientRecord) -> Result<RiskPrediction, ModelError> {
        RiskPrediction::from_prob(self.predict_proba(record)?)
    }
}

/// Fraction of records whose thresholded prediction (`prob >= 0.5` is
/// positive) matches the label.
pub fn evaluate(model: &TrainedModel, data: &Dataset) -> Result<f64, ModelError> {
    accuracy(model, data.records())
}

pub(crate) fn accuracy(model: &TrainedModel, records: &[PatientRecord]) -> Result<f64, ModelError> {
    if records.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut correct = 0usize;
    for r in records {
        let label = r.label.ok_or(ModelError::UnlabeledData)?;
        if (model.predict_proba(r)? >= 0.5) == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / records.len() as f64)
}
