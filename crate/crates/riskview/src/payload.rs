//! JSON payloads served to the dashboard, built from core results.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use riskview_core::counterfactual::{self, FeatureChange};
use riskview_core::datacentric::{range_indicator, DataCentricError, Distribution};
use riskview_core::{
    attributions, Attribution, CounterfactualError, CounterfactualRecommendation, Dataset,
    Direction, ExplainError, Feasibility, FeatureKind, FeatureValue, ModelError, PatientRecord,
    PopulationSummary, RangeIndicator, RiskLevel, RiskPrediction, Schema, TrainedModel,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One row of the patient list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatientListItem {
    pub patient_id: String,
    pub timestamp: NaiveDate,
    pub prob: f64,
    pub level: RiskLevel,
    pub percent: f64,
}

/// Patient information with the current risk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatientOverview {
    pub patient_id: String,
    pub timestamp: NaiveDate,
    pub values: BTreeMap<String, FeatureValue>,
    pub risk: RiskPrediction,
    /// Features with a recommended range or ordinal levels, in schema order.
    pub indicators: Vec<RangeIndicator>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorRow {
    pub feature: String,
    pub percent_share: f64,
    pub direction: Direction,
    pub in_recommended_range: Option<bool>,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecommendationRow {
    pub text: String,
    pub feasibility: Feasibility,
    /// Risk reduction in percentage points, one decimal.
    pub risk_reduction_percent: f64,
    pub changes: Vec<FeatureChange>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationFeature {
    pub feature: String,
    pub kind: FeatureKind,
    pub unit: Option<String>,
    pub recommended_range: Option<[f64; 2]>,
    pub distribution: Distribution,
    /// The selected patient's latest value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marker: Option<FeatureValue>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationView {
    pub n: u64,
    pub features: Vec<PopulationFeature>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhatIfRequest {
    #[serde(default)]
    pub overrides: BTreeMap<String, FeatureValue>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhatIfResponse {
    pub risk: RiskPrediction,
    pub factors: Vec<FactorRow>,
}

/// Latest record of every patient, highest risk first, ties by id.
pub fn patient_list(
    data: &Dataset,
    model: &TrainedModel,
) -> Result<Vec<PatientListItem>, ModelError> {
    let mut rows = data
        .latest_per_patient()
        .into_iter()
        .map(|r| {
            let risk = model.predict(r)?;
            Ok(PatientListItem {
                patient_id: r.patient_id.clone(),
                timestamp: r.timestamp,
                prob: risk.prob,
                level: risk.level,
                percent: risk.percent,
            })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    rows.sort_by(|a, b| {
        b.prob
            .total_cmp(&a.prob)
            .then_with(|| a.patient_id.cmp(&b.patient_id))
    });
    Ok(rows)
}

pub fn patient_overview(
    record: &PatientRecord,
    model: &TrainedModel,
    schema: &Schema,
) -> Result<PatientOverview, DataCentricError> {
    model.check_schema(schema)?;
    let mut indicators = Vec::new();
    for spec in schema.features() {
        let Some(value) = record.value(&spec.name) else {
            continue;
        };
        match range_indicator(value, spec) {
            Ok(ind) => indicators.push(ind),
            Err(DataCentricError::NoRecommendedRange(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(PatientOverview {
        patient_id: record.patient_id.clone(),
        timestamp: record.timestamp,
        values: record.values.clone(),
        risk: model.predict(record)?,
        indicators,
    })
}

pub fn factor_rows(attributions: Vec<Attribution>) -> Vec<FactorRow> {
    attributions
        .into_iter()
        .map(|a| FactorRow {
            feature: a.feature,
            percent_share: a.percent_share,
            direction: a.direction,
            in_recommended_range: a.in_recommended_range,
            note: a.note,
        })
        .collect()
}

pub fn factors(
    record: &PatientRecord,
    model: &TrainedModel,
    schema: &Schema,
) -> Result<Vec<FactorRow>, ExplainError> {
    attributions::important_risk_factors(model, record, schema).map(factor_rows)
}

pub fn recommendation_rows(recs: Vec<CounterfactualRecommendation>) -> Vec<RecommendationRow> {
    recs.into_iter()
        .map(|r| RecommendationRow {
            risk_reduction_percent: round1(r.risk_reduction * 100.0),
            text: r.text,
            feasibility: r.feasibility,
            changes: r.changes,
        })
        .collect()
}

/// Counterfactual recommendations. An unreachable target yields an empty
/// list rather than an error.
pub fn recommendations(
    record: &PatientRecord,
    model: &TrainedModel,
    schema: &Schema,
    target: RiskLevel,
    k: usize,
    seed: u64,
) -> Result<Vec<RecommendationRow>, CounterfactualError> {
    match counterfactual::generate(model, record, schema, target, k, seed) {
        Ok(recs) => Ok(recommendation_rows(recs)),
        Err(CounterfactualError::NoCounterfactualFound) => Ok(Vec::new()),
        Err(e) => Err(e),
    }
}

pub fn population(
    summary: &PopulationSummary,
    schema: &Schema,
    marker: Option<&PatientRecord>,
) -> PopulationView {
    let features = summary
        .features
        .iter()
        .filter_map(|f| {
            let spec = schema.get(&f.feature)?;
            Some(PopulationFeature {
                feature: f.feature.clone(),
                kind: spec.kind,
                unit: spec.unit.clone(),
                recommended_range: spec.recommended_range,
                distribution: f.distribution.clone(),
                marker: marker.and_then(|r| r.value(&f.feature).cloned()),
            })
        })
        .collect();
    PopulationView {
        n: summary.n,
        features,
    }
}

#[derive(Debug, Error)]
pub enum WhatIfError {
    #[error(transparent)]
    Counterfactual(#[from] CounterfactualError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
}

pub fn what_if(
    record: &PatientRecord,
    model: &TrainedModel,
    schema: &Schema,
    overrides: &BTreeMap<String, FeatureValue>,
) -> Result<WhatIfResponse, WhatIfError> {
    let risk = counterfactual::what_if(model, record, schema, overrides)?;
    let changed = counterfactual::apply_overrides(record, schema, overrides)?;
    Ok(WhatIfResponse {
        risk,
        factors: factors(&changed, model, schema)?,
    })
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}
