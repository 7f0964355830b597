//! Data-centric explanations: where a value sits relative to its recommended
//! range, how the population is distributed, and how a patient's predicted
//! risk moves over time.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Dataset, FeatureKind, FeatureSpec, FeatureValue, PatientRecord};
use crate::math::ols_slope;
use crate::model::{bucket_risk, ModelError, RiskLevel, TrainedModel};

pub const HISTOGRAM_BINS: usize = 12;
/// Orange band width beyond either end of a recommended range, as a fraction
/// of the range width.
pub const ORANGE_BAND: f64 = 0.10;
pub const TREND_WINDOW: usize = 6;
/// Probability change per month separating Stable from a trend.
pub const TREND_THRESHOLD: f64 = 0.01;
const DAYS_PER_MONTH: f64 = 365.25 / 12.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataCentricError {
    #[error("dataset has no records")]
    EmptyDataset,
    #[error("feature {0:?} has no recommended range")]
    NoRecommendedRange(String),
    #[error("bad value for {feature:?}: {reason}")]
    BadValue { feature: String, reason: String },
    #[error("risk history needs at least one record")]
    EmptyHistory,
    #[error("history mixes patients {0:?} and {1:?}")]
    MixedPatients(String, String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Distribution {
    /// `bin_edges` has one more entry than `counts`. The last bin is closed.
    Histogram {
        bin_edges: Vec<f64>,
        counts: Vec<u64>,
    },
    Categories {
        labels: Vec<String>,
        counts: Vec<u64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub feature: String,
    pub distribution: Distribution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationSummary {
    pub n: u64,
    pub features: Vec<FeatureSummary>,
}

impl PopulationSummary {
    pub fn feature(&self, name: &str) -> Option<&Distribution> {
        self.features
            .iter()
            .find(|f| f.feature == name)
            .map(|f| &f.distribution)
    }
}

/// Distributions over each patient's latest record.
pub fn summarize_population(data: &Dataset) -> Result<PopulationSummary, DataCentricError> {
    let latest = data.latest_per_patient();
    if latest.is_empty() {
        return Err(DataCentricError::EmptyDataset);
    }
    let features = data
        .schema()
        .features()
        .iter()
        .map(|spec| {
            let distribution = match spec.kind {
                FeatureKind::Continuous => {
                    let values: Vec<f64> =
                        latest.iter().filter_map(|r| r.number(&spec.name)).collect();
                    histogram(&values)
                }
                FeatureKind::Categorical => {
                    let mut counts = vec![0u64; spec.categories.len()];
                    for r in &latest {
                        if let Some(i) = r.label_of(&spec.name).and_then(|l| spec.category_index(l))
                        {
                            counts[i] += 1;
                        }
                    }
                    Distribution::Categories {
                        labels: spec.categories.clone(),
                        counts,
                    }
                }
            };
            FeatureSummary {
                feature: spec.name.clone(),
                distribution,
            }
        })
        .collect();
    Ok(PopulationSummary {
        n: latest.len() as u64,
        features,
    })
}

fn histogram(values: &[f64]) -> Distribution {
    let mut lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let bin_edges: Vec<f64> = (0..=HISTOGRAM_BINS)
        .map(|i| {
            if i == HISTOGRAM_BINS {
                hi
            } else {
                lo + width * i as f64
            }
        })
        .collect();
    let mut counts = vec![0u64; HISTOGRAM_BINS];
    for &x in values {
        let mut i = (libm::floor((x - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
        // Settle rounding so that bin i is exactly [edge_i, edge_{i+1}).
        while i > 0 && x < bin_edges[i] {
            i -= 1;
        }
        while i < HISTOGRAM_BINS - 1 && x >= bin_edges[i + 1] {
            i += 1;
        }
        counts[i] += 1;
    }
    Distribution::Histogram { bin_edges, counts }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RangeStatus {
    WithinRange,
    OutsideRange,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arrow {
    AboveRange,
    BelowRange,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ZoneColor {
    Green,
    Orange,
    Red,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeIndicator {
    pub feature: String,
    pub value: FeatureValue,
    pub status: RangeStatus,
    pub arrow: Arrow,
    pub zone_color: ZoneColor,
}

/// Continuous: Green inside the range, Orange up to 10% of the range width
/// beyond it, Red further out. Categorical: Green at the lowest-risk level,
/// Orange one level below it, Red otherwise.
pub fn range_indicator(
    value: &FeatureValue,
    spec: &FeatureSpec,
) -> Result<RangeIndicator, DataCentricError> {
    spec.check_value(value)
        .map_err(|reason| DataCentricError::BadValue {
            feature: spec.name.clone(),
            reason,
        })?;
    let no_range = || DataCentricError::NoRecommendedRange(spec.name.clone());
    let (arrow, zone_color) = match value {
        FeatureValue::Number(x) => {
            let [lo, hi] = spec.recommended_range.ok_or_else(no_range)?;
            let band = ORANGE_BAND * (hi - lo) * (1.0 + 1e-12);
            let (arrow, overshoot) = if *x > hi {
                (Arrow::AboveRange, x - hi)
            } else if *x < lo {
                (Arrow::BelowRange, lo - x)
            } else {
                (Arrow::None, 0.0)
            };
            let color = match arrow {
                Arrow::None => ZoneColor::Green,
                _ if overshoot <= band => ZoneColor::Orange,
                _ => ZoneColor::Red,
            };
            (arrow, color)
        }
        FeatureValue::Label(l) => {
            let best = spec.best_rank().ok_or_else(no_range)?;
            let rank = spec.rank(l).ok_or_else(no_range)?;
            match best - rank {
                0 => (Arrow::None, ZoneColor::Green),
                1 => (Arrow::BelowRange, ZoneColor::Orange),
                _ => (Arrow::BelowRange, ZoneColor::Red),
            }
        }
    };
    Ok(RangeIndicator {
        feature: spec.name.clone(),
        value: value.clone(),
        status: if arrow == Arrow::None {
            RangeStatus::WithinRange
        } else {
            RangeStatus::OutsideRange
        },
        arrow,
        zone_color,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trend {
    Improving,
    Worsening,
    Stable,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskPoint {
    pub timestamp: NaiveDate,
    pub prob: f64,
    pub level: RiskLevel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskHistory {
    pub patient_id: String,
    pub points: Vec<RiskPoint>,
    /// Least-squares slope of prob per month over the trend window.
    pub slope_per_month: f64,
    pub trend: Trend,
}

/// Months elapsed between two dates, using the mean Gregorian month.
pub fn months_between(from: NaiveDate, to: NaiveDate) -> f64 {
    (to - from).num_days() as f64 / DAYS_PER_MONTH
}

/// Predicted risk per record, oldest first, with a trend over the last
/// [`TREND_WINDOW`] points.
pub fn risk_history(
    records: &[&PatientRecord],
    model: &TrainedModel,
) -> Result<RiskHistory, DataCentricError> {
    let first = records.first().ok_or(DataCentricError::EmptyHistory)?;
    if let Some(other) = records.iter().find(|r| r.patient_id != first.patient_id) {
        return Err(DataCentricError::MixedPatients(
            first.patient_id.clone(),
            other.patient_id.clone(),
        ));
    }
    let mut sorted: Vec<&PatientRecord> = records.to_vec();
    sorted.sort_by_key(|r| r.timestamp);
    if let Some(w) = sorted.windows(2).find(|w| w[0].timestamp == w[1].timestamp) {
        return Err(DataCentricError::BadValue {
            feature: "timestamp".into(),
            reason: format!("duplicate observation on {}", w[0].timestamp),
        });
    }
    let points = sorted
        .iter()
        .map(|r| {
            let prob = model.predict_proba(r)?;
            Ok(RiskPoint {
                timestamp: r.timestamp,
                prob,
                level: bucket_risk(prob)?,
            })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;

    let window = &points[points.len().saturating_sub(TREND_WINDOW)..];
    let origin = window[0].timestamp;
    let xs: Vec<f64> = window
        .iter()
        .map(|p| months_between(origin, p.timestamp))
        .collect();
    let ys: Vec<f64> = window.iter().map(|p| p.prob).collect();
    let slope = ols_slope(&xs, &ys);
    let trend = if slope < -TREND_THRESHOLD {
        Trend::Improving
    } else if slope > TREND_THRESHOLD {
        Trend::Worsening
    } else {
        Trend::Stable
    };
    Ok(RiskHistory {
        patient_id: first.patient_id.clone(),
        points,
        slope_per_month: slope,
        trend,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{gen_synthetic, Schema};
    use alloc::collections::BTreeMap;
    use alloc::string::ToString;
    use chrono::Months;

    fn glucose_spec() -> FeatureSpec {
        FeatureSpec::continuous("glucose", "mmol/L")
            .actionable()
            .with_range(4.0, 6.0)
    }

    #[test]
    fn indicator_zones() {
        let s = glucose_spec();
        let cases = [
            (5.0, ZoneColor::Green, Arrow::None),
            (4.0, ZoneColor::Green, Arrow::None),
            (6.0, ZoneColor::Green, Arrow::None),
            (6.1, ZoneColor::Orange, Arrow::AboveRange),
            (6.2, ZoneColor::Orange, Arrow::AboveRange),
            (6.3, ZoneColor::Red, Arrow::AboveRange),
            (7.5, ZoneColor::Red, Arrow::AboveRange),
            (3.85, ZoneColor::Orange, Arrow::BelowRange),
            (3.7, ZoneColor::Red, Arrow::BelowRange),
        ];
        for (v, color, arrow) in cases {
            let ind = range_indicator(&FeatureValue::Number(v), &s).unwrap();
            assert_eq!((ind.zone_color, ind.arrow), (color, arrow), "{v}");
            assert_eq!(ind.status == RangeStatus::WithinRange, arrow == Arrow::None);
        }
        assert!(matches!(
            range_indicator(
                &FeatureValue::Number(1.0),
                &FeatureSpec::continuous("age", "")
            ),
            Err(DataCentricError::NoRecommendedRange(_))
        ));
    }

    #[test]
    fn categorical_indicator() {
        let schema = Schema::default_diabetes();
        let a = schema.get("activity").unwrap();
        let z = |l: &str| range_indicator(&FeatureValue::Label(l.into()), a).unwrap();
        assert_eq!(z("high").zone_color, ZoneColor::Green);
        assert_eq!(z("high").status, RangeStatus::WithinRange);
        assert_eq!(z("moderate").zone_color, ZoneColor::Orange);
        assert_eq!(z("low").zone_color, ZoneColor::Red);
        assert_eq!(z("low").arrow, Arrow::BelowRange);
        assert!(range_indicator(&FeatureValue::Label("x".into()), a).is_err());
        assert!(range_indicator(
            &FeatureValue::Label("male".into()),
            schema.get("gender").unwrap()
        )
        .is_err());
    }

    fn glucose_record(id: &str, month: u32, g: f64) -> PatientRecord {
        let mut values = BTreeMap::new();
        values.insert("glucose".to_string(), FeatureValue::Number(g));
        PatientRecord {
            patient_id: id.into(),
            timestamp: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap() + Months::new(month),
            values,
            label: None,
        }
    }

    #[test]
    fn summary_counts_latest_records() {
        let schema = Schema::new(vec![glucose_spec()]).unwrap();
        let records = (0..5)
            .map(|i| glucose_record(&i.to_string(), 1, 4.0 + i as f64))
            .collect();
        let d = Dataset::new(schema.clone(), records).unwrap();
        let s = summarize_population(&d).unwrap();
        assert_eq!(s.n, 5);
        let Distribution::Histogram { bin_edges, counts } = s.feature("glucose").unwrap() else {
            panic!("expected histogram");
        };
        assert_eq!(counts.iter().sum::<u64>(), 5);
        assert_eq!(bin_edges.len(), 13);
        assert_eq!(bin_edges[0], 4.0);
        assert_eq!(bin_edges[12], 8.0);
        assert_eq!(counts[0], 1);
        assert_eq!(counts[11], 1);

        // An older record with an extreme value never changes the summary.
        let mut more = d.records().to_vec();
        more.push(glucose_record("0", 0, 50.0));
        let d2 = Dataset::new(schema, more).unwrap();
        assert_eq!(summarize_population(&d2).unwrap(), s);
    }

    #[test]
    fn degenerate_histogram() {
        let schema = Schema::new(vec![glucose_spec()]).unwrap();
        let records = (0..4)
            .map(|i| glucose_record(&i.to_string(), 0, 5.5))
            .collect();
        let d = Dataset::new(schema, records).unwrap();
        let s = summarize_population(&d).unwrap();
        let Distribution::Histogram { bin_edges, counts } = s.feature("glucose").unwrap() else {
            panic!("expected histogram");
        };
        assert_eq!(bin_edges[0], 5.0);
        assert_eq!(bin_edges[12], 6.0);
        assert_eq!(counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(counts.iter().sum::<u64>(), 4);
        assert!(bin_edges.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn categorical_summary_matches_recount() {
        let schema = Schema::default_diabetes();
        let d = gen_synthetic(100, 3, &schema);
        let s = summarize_population(&d).unwrap();
        let Distribution::Categories { labels, counts } = s.feature("activity").unwrap() else {
            panic!("expected categories");
        };
        for (l, c) in labels.iter().zip(counts) {
            let recount = d
                .latest_per_patient()
                .iter()
                .filter(|r| r.label_of("activity") == Some(l))
                .count() as u64;
            assert_eq!(*c, recount);
        }
    }

    fn slope_model() -> (Schema, TrainedModel) {
        let schema = Schema::new(vec![glucose_spec()]).unwrap();
        let m =
            TrainedModel::from_schema(&schema, &[(0.0, 1.0)], vec![1.0], 0.0, vec![0.0]).unwrap();
        (schema, m)
    }

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    #[test]
    fn trend_rules() {
        let (_, m) = slope_model();
        let falling: Vec<PatientRecord> = (0..6)
            .map(|i| glucose_record("a", i, logit(0.8 - 0.05 * i as f64)))
            .collect();
        let refs: Vec<&PatientRecord> = falling.iter().collect();
        let h = risk_history(&refs, &m).unwrap();
        assert_eq!(h.trend, Trend::Improving);
        assert_eq!(h.points.len(), 6);
        for p in &h.points {
            assert_eq!(bucket_risk(p.prob).unwrap(), p.level);
        }

        let flat: Vec<PatientRecord> = (0..6).map(|i| glucose_record("a", i, 0.3)).collect();
        let refs: Vec<&PatientRecord> = flat.iter().collect();
        assert_eq!(risk_history(&refs, &m).unwrap().trend, Trend::Stable);

        let one = [glucose_record("a", 0, 2.0)];
        let h = risk_history(&[&one[0]], &m).unwrap();
        assert_eq!(h.trend, Trend::Stable);
        assert_eq!(h.slope_per_month, 0.0);

        assert_eq!(risk_history(&[], &m), Err(DataCentricError::EmptyHistory));
        let mixed = [glucose_record("a", 0, 1.0), glucose_record("b", 1, 1.0)];
        assert!(risk_history(&[&mixed[0], &mixed[1]], &m).is_err());
    }

    #[test]
    fn trend_uses_last_six_points_in_time_order() {
        let (_, m) = slope_model();
        // Eight months: a steep early drop, then a steady rise.
        let probs = [0.95, 0.2, 0.30, 0.33, 0.36, 0.39, 0.42, 0.45];
        let mut recs: Vec<PatientRecord> = probs
            .iter()
            .enumerate()
            .map(|(i, p)| glucose_record("a", i as u32, logit(*p)))
            .collect();
        recs.reverse();
        let refs: Vec<&PatientRecord> = recs.iter().collect();
        let h = risk_history(&refs, &m).unwrap();
        assert!(h.points.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
        assert_eq!(h.trend, Trend::Worsening);
    }
}
