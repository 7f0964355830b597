//! Exact Shapley attributions for the logistic model in log-odds space.
//!
//! With the training means as background, the Shapley value of encoded column
//! `i` is `w_i * (x_i - mean_i)`. [`brute_shapley`] enumerates every coalition
//! and is kept as an independent check of that closed form.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{FeatureKind, FeatureSpec, FeatureValue, PatientRecord, Schema};
use crate::model::{ModelError, TrainedModel};

/// Enumeration bound for [`brute_shapley`].
pub const MAX_BRUTE_FORCE_COLUMNS: usize = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExplainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0} encoded features exceed the enumeration bound of {MAX_BRUTE_FORCE_COLUMNS}")]
    TooManyFeatures(usize),
    #[error("schema has no actionable features")]
    NoActionableFeatures,
}

/// Attribution of one encoded column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedPhi {
    pub column: String,
    pub phi: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    IncreasesRisk,
    DecreasesRisk,
}

impl Direction {
    /// Zero counts as decreasing.
    pub fn of(phi: f64) -> Self {
        if phi > 0.0 {
            Self::IncreasesRisk
        } else {
            Self::DecreasesRisk
        }
    }
}

/// One row of the "Important Risk Factors" view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub feature: String,
    /// Log-odds contribution, summed over the feature's encoded columns.
    pub phi: f64,
    /// Share of the total `|phi|` over the returned features, in percent.
    pub percent_share: f64,
    pub direction: Direction,
    pub in_recommended_range: Option<bool>,
    pub note: String,
}

pub fn linear_shap(
    model: &TrainedModel,
    record: &PatientRecord,
) -> Result<Vec<EncodedPhi>, ExplainError> {
    let x = model.encode(record)?;
    Ok(model
        .columns()
        .iter()
        .zip(model.weights())
        .zip(x.iter().zip(model.background_means()))
        .map(|((column, w), (xi, mu))| EncodedPhi {
            column: column.clone(),
            phi: w * (xi - mu),
        })
        .collect())
}

/// Shapley values by full enumeration of the `2^d` coalitions, where absent
/// columns take their background mean and `v(S)` is the resulting log-odds.
pub fn brute_shapley(
    model: &TrainedModel,
    record: &PatientRecord,
) -> Result<Vec<EncodedPhi>, ExplainError> {
    let d = model.dim();
    if d > MAX_BRUTE_FORCE_COLUMNS {
        return Err(ExplainError::TooManyFeatures(d));
    }
    let x = model.encode(record)?;
    let mu = model.background_means();

    let value = |mask: usize| -> f64 {
        let z: Vec<f64> = (0..d)
            .map(|i| if mask & (1 << i) != 0 { x[i] } else { mu[i] })
            .collect();
        model.logit_encoded(&z)
    };
    let values: Vec<f64> = (0..1usize << d).map(value).collect();

    // factorial[k] for k <= d
    let mut factorial = vec![1.0f64; d + 1];
    for k in 1..=d {
        factorial[k] = factorial[k - 1] * k as f64;
    }
    let mut phi = vec![0.0; d];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        for mask in 0..1usize << d {
            if mask & bit != 0 {
                continue;
            }
            let s = mask.count_ones() as usize;
            let weight = factorial[s] * factorial[d - s - 1] / factorial[d];
            *p += weight * (values[mask | bit] - values[mask]);
        }
    }
    Ok(model
        .columns()
        .iter()
        .cloned()
        .zip(phi)
        .map(|(column, phi)| EncodedPhi { column, phi })
        .collect())
}

/// Per-feature attributions restricted to actionable features, largest
/// `|phi|` first with ties kept in schema order.
pub fn important_risk_factors(
    model: &TrainedModel,
    record: &PatientRecord,
    schema: &Schema,
) -> Result<Vec<Attribution>, ExplainError> {
    model.check_schema(schema)?;
    if schema.actionable().next().is_none() {
        return Err(ExplainError::NoActionableFeatures);
    }
    let encoded = linear_shap(model, record)?;
    let mut rows: Vec<(&FeatureSpec, f64)> = Vec::new();
    for (name, span) in model.column_spans() {
        let spec = schema.get(name).expect("schema fingerprint matched");
        if !spec.actionable {
            continue;
        }
        let phi: f64 = encoded[span].iter().map(|e| e.phi).sum();
        rows.push((spec, phi));
    }
    let total: f64 = rows.iter().map(|(_, phi)| phi.abs()).sum();
    // Stable sort keeps schema order among equal magnitudes.
    rows.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()));
    Ok(rows
        .into_iter()
        .map(|(spec, phi)| {
            let value = record.value(&spec.name).expect("encoded record");
            let (in_range, note) = range_note(spec, value);
            Attribution {
                feature: spec.name.clone(),
                phi,
                percent_share: if total > 0.0 {
                    phi.abs() / total * 100.0
                } else {
                    0.0
                },
                direction: Direction::of(phi),
                in_recommended_range: in_range,
                note,
            }
        })
        .collect())
}

fn range_note(spec: &FeatureSpec, value: &FeatureValue) -> (Option<bool>, String) {
    match (spec.kind, value) {
        (FeatureKind::Continuous, FeatureValue::Number(x)) => {
            let unit = spec
                .unit
                .as_deref()
                .map(|u| format!(" {u}"))
                .unwrap_or_default();
            match spec.recommended_range {
                Some([lo, hi]) => {
                    let range = format!("{lo}-{hi}{unit}");
                    if *x > hi {
                        (
                            Some(false),
                            format!("{x}{unit} is above the recommended range of {range}"),
                        )
                    } else if *x < lo {
                        (
                            Some(false),
                            format!("{x}{unit} is below the recommended range of {range}"),
                        )
                    } else {
                        (
                            Some(true),
                            format!("{x}{unit} is within the recommended range of {range}"),
                        )
                    }
                }
                None => (None, format!("Current value {x}{unit}")),
            }
        }
        (FeatureKind::Categorical, FeatureValue::Label(l)) => {
            let best = spec
                .best_rank()
                .and_then(|b| spec.categories.iter().find(|c| spec.rank(c) == Some(b)));
            match best {
                Some(best) if best == l => (Some(true), format!("{l} is the recommended level")),
                Some(best) => (Some(false), format!("{l}; the recommended level is {best}")),
                None => (None, format!("Current level {l}")),
            }
        }
        _ => (None, String::new()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{gen_synthetic, FeatureSpec};
    use alloc::collections::BTreeMap;
    use alloc::string::ToString;

    fn one_feature_model(w: f64, mean: f64) -> (Schema, TrainedModel) {
        let schema = Schema::new(vec![FeatureSpec::continuous("glucose", "mmol/L")
            .actionable()
            .with_range(3.9, 5.6)])
        .unwrap();
        let m =
            TrainedModel::from_schema(&schema, &[(mean, 1.0)], vec![w], 0.3, vec![0.0]).unwrap();
        (schema, m)
    }

    fn glucose(x: f64) -> PatientRecord {
        let mut values = BTreeMap::new();
        values.insert("glucose".to_string(), FeatureValue::Number(x));
        PatientRecord {
            patient_id: "p".into(),
            timestamp: chrono::NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
            values,
            label: None,
        }
    }

    #[test]
    fn closed_form_single_feature() {
        let (_, m) = one_feature_model(2.0, 5.0);
        let phi = linear_shap(&m, &glucose(6.0)).unwrap();
        assert_eq!(phi[0].phi, 2.0);
        let brute = brute_shapley(&m, &glucose(6.0)).unwrap();
        assert!((brute[0].phi - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_at_background() {
        let (_, m) = one_feature_model(2.0, 5.0);
        assert_eq!(linear_shap(&m, &glucose(5.0)).unwrap()[0].phi, 0.0);
    }

    #[test]
    fn symmetric_duplicates_get_equal_phi() {
        let schema = Schema::new(vec![
            FeatureSpec::continuous("a", ""),
            FeatureSpec::continuous("b", ""),
            FeatureSpec::continuous("c", ""),
        ])
        .unwrap();
        let m = TrainedModel::from_schema(
            &schema,
            &[(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)],
            vec![1.5, 1.5, -0.4],
            0.1,
            vec![0.2, 0.2, -0.3],
        )
        .unwrap();
        let mut values = BTreeMap::new();
        values.insert("a".to_string(), FeatureValue::Number(2.0));
        values.insert("b".to_string(), FeatureValue::Number(2.0));
        values.insert("c".to_string(), FeatureValue::Number(1.0));
        let r = PatientRecord {
            patient_id: "p".into(),
            timestamp: chrono::NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
            values,
            label: None,
        };
        let phi = brute_shapley(&m, &r).unwrap();
        assert!((phi[0].phi - phi[1].phi).abs() < 1e-12);
    }

    #[test]
    fn enumeration_bound() {
        let features = (0..13)
            .map(|i| FeatureSpec::continuous(&format!("f{i}"), ""))
            .collect();
        let schema = Schema::new(features).unwrap();
        let m = TrainedModel::from_schema(
            &schema,
            &[(0.0, 1.0); 13],
            vec![1.0; 13],
            0.0,
            vec![0.0; 13],
        )
        .unwrap();
        let values = (0..13)
            .map(|i| (format!("f{i}"), FeatureValue::Number(1.0)))
            .collect();
        let r = PatientRecord {
            patient_id: "p".into(),
            timestamp: chrono::NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
            values,
            label: None,
        };
        assert_eq!(
            brute_shapley(&m, &r),
            Err(ExplainError::TooManyFeatures(13))
        );
        assert_eq!(linear_shap(&m, &r).unwrap().len(), 13);
    }

    #[test]
    fn no_actionable_features() {
        let schema = Schema::new(vec![FeatureSpec::continuous("age", "years")]).unwrap();
        let m =
            TrainedModel::from_schema(&schema, &[(50.0, 10.0)], vec![1.0], 0.0, vec![0.0]).unwrap();
        let mut values = BTreeMap::new();
        values.insert("age".to_string(), FeatureValue::Number(60.0));
        let r = PatientRecord {
            patient_id: "p".into(),
            timestamp: chrono::NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
            values,
            label: None,
        };
        assert_eq!(
            important_risk_factors(&m, &r, &schema),
            Err(ExplainError::NoActionableFeatures)
        );
    }

    #[test]
    fn single_actionable_feature_takes_full_share() {
        let (schema, m) = one_feature_model(2.0, 5.0);
        let f = important_risk_factors(&m, &glucose(7.5), &schema).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].percent_share, 100.0);
        assert_eq!(f[0].direction, Direction::IncreasesRisk);
        assert_eq!(f[0].in_recommended_range, Some(false));
        assert_eq!(
            f[0].note,
            "7.5 mmol/L is above the recommended range of 3.9-5.6 mmol/L"
        );
        let f = important_risk_factors(&m, &glucose(5.0), &schema).unwrap();
        assert_eq!(f[0].percent_share, 0.0);
        assert_eq!(f[0].direction, Direction::DecreasesRisk);
    }

    fn default_model() -> (Schema, TrainedModel) {
        let schema = Schema::default_diabetes();
        // glucose, bmi, waist, activity=moderate, activity=high,
        // vegetables=daily, medication_history=no, age, gender=male
        let m = TrainedModel::from_schema(
            &schema,
            &[(6.0, 1.0), (27.0, 4.0), (100.0, 14.0), (54.0, 12.0)],
            vec![1.2, 0.6, 0.5, -0.5, -1.0, -0.4, -0.5, 0.7, 0.2],
            0.0,
            vec![0.0, 0.0, 0.0, 0.33, 0.33, 0.5, 0.5, 0.0, 0.5],
        )
        .unwrap();
        (schema, m)
    }

    #[test]
    fn high_glucose_ranks_first() {
        let (schema, m) = default_model();
        let mut r = gen_synthetic(1, 4, &schema).records()[0].clone();
        for (k, v) in [
            ("glucose", 12.0),
            ("bmi", 27.0),
            ("waist", 100.0),
            ("age", 54.0),
        ] {
            r.values.insert(k.into(), FeatureValue::Number(v));
        }
        // |phi_glucose| = 1.2 * 6 = 7.2; every other actionable |phi| <= 1.
        let f = important_risk_factors(&m, &r, &schema).unwrap();
        assert_eq!(f[0].feature, "glucose");
        assert_eq!(f[0].direction, Direction::IncreasesRisk);
        assert!((f[0].phi - 7.2).abs() < 1e-12);
        assert!(f.iter().all(|a| schema.get(&a.feature).unwrap().actionable));
        assert_eq!(f.len(), 6);
        let sum: f64 = f.iter().map(|a| a.percent_share).sum();
        assert!((sum - 100.0).abs() < 0.01);
    }

    #[test]
    fn categorical_phi_sums_columns() {
        let (schema, m) = default_model();
        let mut r = gen_synthetic(1, 4, &schema).records()[0].clone();
        r.values.insert("activity".into(), "high".into());
        let f = important_risk_factors(&m, &r, &schema).unwrap();
        let act = f.iter().find(|a| a.feature == "activity").unwrap();
        // -0.5 * (0 - 0.33) + -1.0 * (1 - 0.33)
        assert!((act.phi - (0.165 - 0.67)).abs() < 1e-12);
        assert_eq!(act.in_recommended_range, Some(true));
    }

    #[test]
    fn ties_keep_schema_order() {
        let schema = Schema::new(vec![
            FeatureSpec::continuous("a", "").actionable(),
            FeatureSpec::continuous("b", "").actionable(),
        ])
        .unwrap();
        let m = TrainedModel::from_schema(
            &schema,
            &[(0.0, 1.0), (0.0, 1.0)],
            vec![1.0, -1.0],
            0.0,
            vec![0.0, 0.0],
        )
        .unwrap();
        let mut values = BTreeMap::new();
        values.insert("a".to_string(), FeatureValue::Number(1.0));
        values.insert("b".to_string(), FeatureValue::Number(1.0));
        let r = PatientRecord {
            patient_id: "p".into(),
            timestamp: chrono::NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
            values,
            label: None,
        };
        let f = important_risk_factors(&m, &r, &schema).unwrap();
        assert_eq!(f[0].feature, "a");
        assert_eq!(f[1].feature, "b");
        assert_eq!(f[0].percent_share, 50.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn efficiency_and_oracle_agreement(
                weights in proptest::collection::vec(-3.0f64..3.0, 9),
                bg in proptest::collection::vec(-1.0f64..1.0, 9),
                seed in 0u64..1000,
            ) {
                let schema = Schema::default_diabetes();
                let m = TrainedModel::from_schema(
                    &schema,
                    &[(6.0, 1.0), (27.0, 4.0), (100.0, 14.0), (54.0, 12.0)],
                    weights,
                    0.2,
                    bg,
                ).unwrap();
                let r = gen_synthetic(1, seed, &schema).records()[0].clone();
                let fast = linear_shap(&m, &r).unwrap();
                let slow = brute_shapley(&m, &r).unwrap();
                for (a, b) in fast.iter().zip(&slow) {
                    prop_assert!((a.phi - b.phi).abs() < 1e-9);
                }
                let total: f64 = fast.iter().map(|e| e.phi).sum();
                prop_assert!((total - (m.logit(&r).unwrap() - m.base_logit())).abs() < 1e-9);
            }
        }
    }
}
