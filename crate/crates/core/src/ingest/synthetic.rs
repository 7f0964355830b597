//! Seeded synthetic cohorts with a planted logistic outcome.
//!
//! Each patient gets [`RECORDS_PER_PATIENT`] monthly observations. Actionable
//! continuous measures drift along a per-patient trend, so some patients
//! improve and some deteriorate over the six months. Every record's label is
//! drawn from `sigmoid(PlantedRule::logit(record))`, which gives model-recovery
//! tests a known ground truth.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use chrono::{Months, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::record::{Dataset, FeatureValue, PatientRecord};
use super::schema::{FeatureKind, FeatureSpec, Schema};
use crate::math::{round1, sigmoid};

pub const RECORDS_PER_PATIENT: usize = 6;

/// Multiplier applied to the planted linear score before the sigmoid.
const SHARPNESS: f64 = 3.5;
const TREND_PER_MONTH: f64 = 0.15;
const MONTHLY_NOISE: f64 = 0.05;
const CATEGORY_SHIFT_PROB: f64 = 0.1;

fn first_visit() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date")
}

/// Population location, spread and planted effect of one feature.
#[derive(Clone, Debug, PartialEq)]
pub enum PlantedEffect {
    /// Effect per standard deviation above `mean`.
    Continuous {
        mean: f64,
        std_dev: f64,
        effect: f64,
    },
    /// Effect per category, in schema category order.
    Categorical { effects: Vec<f64> },
}

/// The ground-truth score used to label synthetic records.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantedRule {
    pub intercept: f64,
    pub effects: Vec<(String, PlantedEffect)>,
}

fn continuous_population(spec: &FeatureSpec) -> (f64, f64) {
    match (spec.recommended_range, spec.bounds) {
        // Centred a quarter range-width above the healthy range so that a
        // sizeable share of the cohort sits outside it.
        (Some([lo, hi]), _) => (hi + 0.25 * (hi - lo), 0.6 * (hi - lo)),
        (None, Some([lo, hi])) => (0.5 * (lo + hi), (hi - lo) / 6.0),
        (None, None) => (0.0, 1.0),
    }
}

impl PlantedRule {
    pub fn for_schema(schema: &Schema) -> Self {
        let mut expected_categorical = 0.0;
        let effects = schema
            .features()
            .iter()
            .map(|spec| {
                let effect = match spec.kind {
                    FeatureKind::Continuous => {
                        let (mean, std_dev) = continuous_population(spec);
                        let effect = if spec.actionable && spec.recommended_range.is_some() {
                            1.0
                        } else {
                            0.6
                        };
                        PlantedEffect::Continuous {
                            mean,
                            std_dev,
                            effect,
                        }
                    }
                    FeatureKind::Categorical => {
                        let n = spec.categories.len();
                        let effects: Vec<f64> = match (&spec.ordinal_risk, spec.best_rank()) {
                            (Some(_), Some(best)) => spec
                                .categories
                                .iter()
                                .map(|c| {
                                    let rank = spec.rank(c).unwrap_or(best);
                                    0.8 * f64::from(best - rank) / f64::from(best - 1)
                                })
                                .collect(),
                            _ => (0..n).map(|i| 0.3 * i as f64 / (n - 1) as f64).collect(),
                        };
                        expected_categorical += effects.iter().sum::<f64>() / n as f64;
                        PlantedEffect::Categorical { effects }
                    }
                };
                (spec.name.clone(), effect)
            })
            .collect();
        Self {
            intercept: -SHARPNESS * expected_categorical,
            effects,
        }
    }

    /// Log-odds of a positive outcome. Panics if `record` lacks a feature.
    pub fn logit(&self, schema: &Schema, record: &PatientRecord) -> f64 {
        let mut score = 0.0;
        for (name, effect) in &self.effects {
            let value = record.value(name).expect("record covers the schema");
            score += match (effect, value) {
                (
                    PlantedEffect::Continuous {
                        mean,
                        std_dev,
                        effect,
                    },
                    FeatureValue::Number(x),
                ) => effect * (x - mean) / std_dev,
                (PlantedEffect::Categorical { effects }, FeatureValue::Label(l)) => {
                    let spec = schema.get(name).expect("rule built from this schema");
                    effects[spec.category_index(l).expect("validated label")]
                }
                _ => panic!("value kind does not match feature {name}"),
            };
        }
        self.intercept + SHARPNESS * score
    }
}

/// Generates `n` patients with [`RECORDS_PER_PATIENT`] monthly records each.
/// Output is a pure function of `(n, seed, schema)`.
pub fn gen_synthetic(n: usize, seed: u64, schema: &Schema) -> Dataset {
    let rule = PlantedRule::for_schema(schema);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = digits(n);
    let mut records = Vec::with_capacity(n * RECORDS_PER_PATIENT);

    for p in 0..n {
        let patient_id = format!("P{:0width$}", p + 1);
        let trend: f64 = rng.sample(StandardNormal);
        let mut baseline: Vec<FeatureValue> = Vec::with_capacity(schema.len());
        for spec in schema.features() {
            baseline.push(match spec.kind {
                FeatureKind::Continuous => {
                    let (mean, sd) = continuous_population(spec);
                    let z: f64 = rng.sample(StandardNormal);
                    FeatureValue::Number(clamp_to_bounds(spec, mean + sd * z))
                }
                FeatureKind::Categorical => {
                    let i = rng.random_range(0..spec.categories.len());
                    FeatureValue::Label(spec.categories[i].clone())
                }
            });
        }

        let mut current = baseline.clone();
        for month in 0..RECORDS_PER_PATIENT {
            if month > 0 {
                for (spec, (value, base)) in schema
                    .features()
                    .iter()
                    .zip(current.iter_mut().zip(&baseline))
                {
                    drift(spec, value, base, trend, month, &mut rng);
                }
            }
            let values: BTreeMap<String, FeatureValue> = schema
                .names()
                .map(String::from)
                .zip(current.iter().cloned())
                .collect();
            let mut record = PatientRecord {
                patient_id: patient_id.clone(),
                timestamp: first_visit() + Months::new(month as u32),
                values,
                label: None,
            };
            let p_pos = sigmoid(rule.logit(schema, &record));
            record.label = Some(rng.random::<f64>() < p_pos);
            records.push(record);
        }
    }
    Dataset::new(schema.clone(), records).expect("generator emits schema-valid records")
}

fn drift(
    spec: &FeatureSpec,
    value: &mut FeatureValue,
    base: &FeatureValue,
    trend: f64,
    month: usize,
    rng: &mut ChaCha8Rng,
) {
    match (spec.kind, value) {
        (FeatureKind::Continuous, FeatureValue::Number(x)) => {
            let base = base.as_number().expect("continuous baseline");
            if spec.actionable {
                let (_, sd) = continuous_population(spec);
                let noise: f64 = rng.sample(StandardNormal);
                let shifted =
                    base + sd * (TREND_PER_MONTH * trend * month as f64 + MONTHLY_NOISE * noise);
                *x = clamp_to_bounds(spec, shifted);
            } else if spec.name == "age" {
                *x = clamp_to_bounds(spec, base + month as f64 / 12.0);
            }
        }
        (FeatureKind::Categorical, FeatureValue::Label(label)) => {
            if !spec.actionable || rng.random::<f64>() >= CATEGORY_SHIFT_PROB {
                return;
            }
            let (Some(rank), Some(best)) = (spec.rank(label), spec.best_rank()) else {
                return;
            };
            // Improving patients (negative trend) move toward lower-risk ranks.
            let next = if trend < 0.0 {
                (rank + 1).min(best)
            } else {
                rank.saturating_sub(1).max(1)
            };
            if let Some(l) = spec.categories.iter().find(|c| spec.rank(c) == Some(next)) {
                *label = l.clone();
            }
        }
        _ => {}
    }
}

fn clamp_to_bounds(spec: &FeatureSpec, x: f64) -> f64 {
    let x = match spec.bounds {
        Some([lo, hi]) => x.clamp(lo, hi),
        None => x,
    };
    round1(x)
}

fn digits(mut n: usize) -> usize {
    let mut d = 1;
    while n >= 10 {
        n /= 10;
        d += 1;
    }
    d.max(4)
}
