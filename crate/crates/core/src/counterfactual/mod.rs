//! Actionable counterfactual recommendations and what-if evaluation.

mod search;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{FeatureKind, FeatureSpec, FeatureValue, PatientRecord, Schema};
use crate::math::round1;
use crate::model::{ModelError, RiskPrediction, TrainedModel};

pub use search::{generate, GRID_POINTS};

/// Largest relative change of a continuous feature labeled Easy.
pub const EASY_RELATIVE_CHANGE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CounterfactualError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("feature {0:?}: current value is 0 and no recommended range is configured")]
    ZeroBaselineNoRange(String),
    #[error("feature {feature:?} has no label {label:?}")]
    UnknownLabel { feature: String, label: String },
    #[error("feature {0:?} has no ordinal risk encoding")]
    NotOrdinal(String),
    #[error("feature {feature:?} is {actual:?}, expected {expected:?}")]
    WrongKind {
        feature: String,
        expected: FeatureKind,
        actual: FeatureKind,
    },
    #[error("patient is already at or below the target risk level")]
    AlreadyAtTarget,
    #[error("no counterfactual reaches the target within the configured bounds")]
    NoCounterfactualFound,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("invalid change to {feature:?}: {reason}")]
    InvalidChange { feature: String, reason: String },
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("bad value for {feature:?}: {reason}")]
    BadValue { feature: String, reason: String },
    #[error("no recommendation template for {feature:?} = {label:?}")]
    MissingTemplate { feature: String, label: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Feasibility {
    Easy,
    Difficult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureChange {
    pub feature: String,
    pub from: FeatureValue,
    pub to: FeatureValue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualRecommendation {
    pub changes: Vec<FeatureChange>,
    pub prob_after: f64,
    /// `prob_before - prob_after`, as a probability.
    pub risk_reduction: f64,
    pub feasibility: Feasibility,
    pub text: String,
}

fn expect_kind(spec: &FeatureSpec, expected: FeatureKind) -> Result<(), CounterfactualError> {
    if spec.kind == expected {
        Ok(())
    } else {
        Err(CounterfactualError::WrongKind {
            feature: spec.name.clone(),
            expected,
            actual: spec.kind,
        })
    }
}

/// Easy when the relative change is within ±10% of the current value.
/// A zero baseline is measured against the recommended-range width instead.
pub fn feasibility_continuous(
    current: f64,
    proposed: f64,
    spec: &FeatureSpec,
) -> Result<Feasibility, CounterfactualError> {
    expect_kind(spec, FeatureKind::Continuous)?;
    let denominator = if current == 0.0 {
        match spec.recommended_range {
            Some([lo, hi]) => hi - lo,
            None => return Err(CounterfactualError::ZeroBaselineNoRange(spec.name.clone())),
        }
    } else {
        current.abs()
    };
    // Slack of a few ulps so that e.g. 7.5 -> 8.25 still counts as exactly 10%.
    let limit = EASY_RELATIVE_CHANGE * denominator * (1.0 + 1e-12);
    Ok(if (proposed - current).abs() <= limit {
        Feasibility::Easy
    } else {
        Feasibility::Difficult
    })
}

/// Easy when the ordinal ranks of the two labels are adjacent.
pub fn feasibility_categorical(
    from: &str,
    to: &str,
    spec: &FeatureSpec,
) -> Result<Feasibility, CounterfactualError> {
    expect_kind(spec, FeatureKind::Categorical)?;
    if spec.ordinal_risk.is_none() {
        return Err(CounterfactualError::NotOrdinal(spec.name.clone()));
    }
    let rank = |label: &str| {
        spec.rank(label)
            .ok_or_else(|| CounterfactualError::UnknownLabel {
                feature: spec.name.clone(),
                label: label.into(),
            })
    };
    let (a, b) = (rank(from)?, rank(to)?);
    Ok(if a.abs_diff(b) == 1 {
        Feasibility::Easy
    } else {
        Feasibility::Difficult
    })
}

pub fn feasibility_of(
    change: &FeatureChange,
    spec: &FeatureSpec,
) -> Result<Feasibility, CounterfactualError> {
    match (&change.from, &change.to) {
        (FeatureValue::Number(a), FeatureValue::Number(b)) => feasibility_continuous(*a, *b, spec),
        (FeatureValue::Label(a), FeatureValue::Label(b)) => feasibility_categorical(a, b, spec),
        _ => Err(CounterfactualError::InvalidChange {
            feature: change.feature.clone(),
            reason: "from and to have different kinds".into(),
        }),
    }
}

/// Categorical changes use the configured template for the target label.
/// Continuous changes read "Reduce/Increase <feature> from <a> to <b> <unit>".
pub fn render_recommendation(
    change: &FeatureChange,
    spec: &FeatureSpec,
) -> Result<String, CounterfactualError> {
    match (&change.from, &change.to) {
        (FeatureValue::Number(from), FeatureValue::Number(to)) => {
            let verb = if to < from { "Reduce" } else { "Increase" };
            let unit = spec
                .unit
                .as_deref()
                .map(|u| format!(" {u}"))
                .unwrap_or_default();
            Ok(format!(
                "{verb} {} from {:.1} to {:.1}{unit}",
                spec.name,
                round1(*from),
                round1(*to)
            ))
        }
        (_, FeatureValue::Label(to)) => spec.template(to).map(String::from).ok_or_else(|| {
            CounterfactualError::MissingTemplate {
                feature: spec.name.clone(),
                label: to.clone(),
            }
        }),
        _ => Err(CounterfactualError::InvalidChange {
            feature: change.feature.clone(),
            reason: "from and to have different kinds".into(),
        }),
    }
}

/// Search box of a continuous feature: configured bounds, else the model's
/// training `[1st, 99th]` percentiles.
pub fn search_bounds(spec: &FeatureSpec, model: &TrainedModel) -> Option<[f64; 2]> {
    spec.bounds.or_else(|| model.data_bounds(&spec.name))
}

fn validate_change(
    change: &FeatureChange,
    record: &PatientRecord,
    schema: &Schema,
    model: &TrainedModel,
) -> Result<(), CounterfactualError> {
    let invalid = |reason: String| CounterfactualError::InvalidChange {
        feature: change.feature.clone(),
        reason,
    };
    let spec = schema
        .get(&change.feature)
        .ok_or_else(|| invalid("not in schema".into()))?;
    if !spec.actionable {
        return Err(invalid("feature is not actionable".into()));
    }
    if record.value(&change.feature) != Some(&change.from) {
        return Err(invalid(format!("record value is not {}", change.from)));
    }
    if change.from == change.to {
        return Err(invalid("target equals current value".into()));
    }
    spec.check_value(&change.to).map_err(invalid)?;
    if let (FeatureValue::Number(x), Some([lo, hi])) = (&change.to, search_bounds(spec, model)) {
        if *x < lo || *x > hi {
            return Err(invalid(format!("{x} outside bounds [{lo}, {hi}]")));
        }
    }
    Ok(())
}

pub fn apply_changes(record: &PatientRecord, changes: &[FeatureChange]) -> PatientRecord {
    let mut out = record.clone();
    for c in changes {
        out.values.insert(c.feature.clone(), c.to.clone());
    }
    out
}

/// `predict_proba(record) - predict_proba(record with changes)`.
pub fn estimate_risk_reduction(
    model: &TrainedModel,
    record: &PatientRecord,
    schema: &Schema,
    changes: &[FeatureChange],
) -> Result<f64, CounterfactualError> {
    model.check_schema(schema)?;
    for c in changes {
        validate_change(c, record, schema, model)?;
    }
    if changes.is_empty() {
        return Ok(0.0);
    }
    let before = model.predict_proba(record)?;
    let after = model.predict_proba(&apply_changes(record, changes))?;
    Ok(before - after)
}

/// Applies `overrides` (any schema feature, actionable or not) and returns
/// the overridden record. The input record is untouched.
pub fn apply_overrides(
    record: &PatientRecord,
    schema: &Schema,
    overrides: &BTreeMap<String, FeatureValue>,
) -> Result<PatientRecord, CounterfactualError> {
    let mut out = record.clone();
    for (feature, value) in overrides {
        let spec = schema
            .get(feature)
            .ok_or_else(|| CounterfactualError::UnknownFeature(feature.clone()))?;
        spec.check_value(value)
            .map_err(|reason| CounterfactualError::BadValue {
                feature: feature.clone(),
                reason,
            })?;
        out.values.insert(feature.clone(), value.clone());
    }
    Ok(out)
}

pub fn what_if(
    model: &TrainedModel,
    record: &PatientRecord,
    schema: &Schema,
    overrides: &BTreeMap<String, FeatureValue>,
) -> Result<RiskPrediction, CounterfactualError> {
    model.check_schema(schema)?;
    let changed = apply_overrides(record, schema, overrides)?;
    Ok(model.predict(&changed)?)
}
