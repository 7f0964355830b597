use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{
    accuracy, EncodedFeature, FeatureEncoding, Metrics, ModelError, ModelParts, TrainedModel,
};
use crate::ingest::{Dataset, FeatureKind, FeatureValue};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Coefficient of `0.5 * |w|^2`; the intercept is not penalized.
    pub l2: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 500,
            l2: 1e-3,
        }
    }
}

const STD_EPSILON: f64 = 1e-12;

/// Full-batch gradient descent on the penalized mean log-loss.
pub fn fit(
    train: &Dataset,
    test: &Dataset,
    hyper: &Hyperparameters,
) -> Result<TrainedModel, ModelError> {
    fit_traced(train, test, hyper).map(|(m, _)| m)
}

/// Like [`fit`], also returning the objective before each epoch and after
/// the last one (`epochs + 1` values).
pub fn fit_traced(
    train: &Dataset,
    test: &Dataset,
    hyper: &Hyperparameters,
) -> Result<(TrainedModel, Vec<f64>), ModelError> {
    if train.is_empty() || test.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if train.schema() != test.schema() {
        return Err(ModelError::SchemaMismatch(
            "train and test schemas differ".into(),
        ));
    }
    let labels: Vec<f64> = train
        .records()
        .iter()
        .map(|r| r.label.map(|l| if l { 1.0 } else { 0.0 }))
        .collect::<Option<_>>()
        .ok_or(ModelError::UnlabeledData)?;
    if test.records().iter().any(|r| r.label.is_none()) {
        return Err(ModelError::UnlabeledData);
    }
    let positives = labels.iter().filter(|&&y| y == 1.0).count();
    if positives == 0 || positives == labels.len() {
        return Err(ModelError::SingleClass);
    }

    let features = fit_encoding(train)?;
    let dim: usize = features.iter().map(EncodedFeature::width).sum();
    // Encode with a provisional zero model; only the encoding is used here.
    let encoder = TrainedModel::from_parts(ModelParts {
        features: features.clone(),
        weights: vec![0.0; dim],
        intercept: 0.0,
        background_means: vec![0.0; dim],
        metrics: Metrics::default(),
        schema_hash: train.schema().fingerprint(),
    })?;
    let n = train.len();
    let mut x = Vec::with_capacity(n * dim);
    for r in train.records() {
        x.extend(encoder.encode(r)?);
    }
    let mut background = vec![0.0; dim];
    for row in x.chunks_exact(dim) {
        for (b, v) in background.iter_mut().zip(row) {
            *b += v;
        }
    }
    background.iter_mut().for_each(|b| *b /= n as f64);

    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut grad = vec![0.0; dim];
    let mut trace = Vec::with_capacity(hyper.epochs + 1);
    for epoch in 0..=hyper.epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = 0.0;
        let mut loss = 0.0;
        for (row, &y) in x.chunks_exact(dim).zip(&labels) {
            let z = b + row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            // One exp serves both the log-loss and the sigmoid.
            let e = libm::exp(-z.abs());
            loss += z.max(0.0) + libm::log1p(e) - y * z;
            let p = if z >= 0.0 {
                1.0 / (1.0 + e)
            } else {
                e / (1.0 + e)
            };
            let r = p - y;
            grad_b += r;
            for (g, v) in grad.iter_mut().zip(row) {
                *g += r * v;
            }
        }
        let penalty = 0.5 * hyper.l2 * w.iter().map(|v| v * v).sum::<f64>();
        let objective = loss / n as f64 + penalty;
        if !objective.is_finite() {
            return Err(ModelError::NonFinite);
        }
        trace.push(objective);
        if epoch == hyper.epochs {
            break;
        }
        for (wi, g) in w.iter_mut().zip(&grad) {
            *wi -= hyper.learning_rate * (g / n as f64 + hyper.l2 * *wi);
        }
        b -= hyper.learning_rate * grad_b / n as f64;
        if !b.is_finite() || w.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite);
        }
    }

    let mut model = TrainedModel::from_parts(ModelParts {
        features,
        weights: w,
        intercept: b,
        background_means: background,
        metrics: Metrics::default(),
        schema_hash: train.schema().fingerprint(),
    })?;
    model.parts.metrics = Metrics {
        train_accuracy: accuracy(&model, train.records())?,
        test_accuracy: accuracy(&model, test.records())?,
    };
    Ok((model, trace))
}

fn fit_encoding(train: &Dataset) -> Result<Vec<EncodedFeature>, ModelError> {
    let n = train.len() as f64;
    train
        .schema()
        .features()
        .iter()
        .map(|spec| {
            let encoding = match spec.kind {
                FeatureKind::Continuous => {
                    let mut values: Vec<f64> = train
                        .records()
                        .iter()
                        .filter_map(|r| r.value(&spec.name).and_then(FeatureValue::as_number))
                        .collect();
                    let mean = values.iter().sum::<f64>() / n;
                    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                    let std_dev = libm::sqrt(var);
                    if std_dev <= STD_EPSILON * mean.abs().max(1.0) {
                        return Err(ModelError::ConstantFeature(spec.name.clone()));
                    }
                    values.sort_by(f64::total_cmp);
                    FeatureEncoding::Standardized {
                        mean,
                        std_dev,
                        data_bounds: Some([percentile(&values, 0.01), percentile(&values, 0.99)]),
                    }
                }
                FeatureKind::Categorical => FeatureEncoding::OneHot {
                    levels: spec.categories.clone(),
                },
            };
            Ok(EncodedFeature {
                name: spec.name.clone(),
                encoding,
            })
        })
        .collect()
}

/// Nearest-rank percentile of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = libm::ceil(q * sorted.len() as f64) as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{gen_synthetic, FeatureSpec, PatientRecord, Schema};
    use alloc::collections::BTreeMap;
    use alloc::format;

    fn toy_schema() -> Schema {
        Schema::new(vec![
            FeatureSpec::continuous("a", ""),
            FeatureSpec::continuous("b", ""),
        ])
        .unwrap()
    }

    /// Label is the sign of `a + b`, and `|a + b| >= 1.5` on every row.
    fn separable(n: usize, offset: usize) -> Dataset {
        let records = (0..n)
            .map(|i| {
                let k = (i + offset) as f64;
                let t = (k * 0.37).sin() * 3.0;
                let positive = i % 2 == 0;
                let shift = if positive { 1.0 } else { -1.0 };
                let a = t + shift;
                let b = -t + shift * (0.5 + 0.5 * (k * 0.11).cos().abs());
                let mut values = BTreeMap::new();
                values.insert("a".into(), FeatureValue::Number(a));
                values.insert("b".into(), FeatureValue::Number(b));
                PatientRecord {
                    patient_id: format!("p{}", i + offset),
                    timestamp: chrono::NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
                    values,
                    label: Some(positive),
                }
            })
            .collect();
        Dataset::new(toy_schema(), records).unwrap()
    }

    #[test]
    fn separable_toy_set() {
        let train = separable(200, 0);
        let test = separable(200, 1000);
        // Construction check: a + b >= 1.5 for positives, <= -1.5 for negatives.
        for r in train.records().iter().chain(test.records()) {
            let s = r.number("a").unwrap() + r.number("b").unwrap();
            assert!(if r.label.unwrap() {
                s >= 1.5
            } else {
                s <= -1.5
            });
        }
        let m = fit(&train, &test, &Hyperparameters::default()).unwrap();
        assert!(m.metrics().test_accuracy >= 0.95, "{:?}", m.metrics());
        assert!(m.weights()[0] > 0.0 && m.weights()[1] > 0.0);
    }

    #[test]
    fn single_class_rejected() {
        let mut records = separable(20, 0).records().to_vec();
        records.iter_mut().for_each(|r| r.label = Some(true));
        let d = Dataset::new(toy_schema(), records).unwrap();
        assert_eq!(
            fit(&d, &d, &Hyperparameters::default()),
            Err(ModelError::SingleClass)
        );
    }

    #[test]
    fn constant_feature_rejected() {
        let mut records = separable(20, 0).records().to_vec();
        records
            .iter_mut()
            .for_each(|r| drop(r.values.insert("b".into(), FeatureValue::Number(3.0))));
        let d = Dataset::new(toy_schema(), records).unwrap();
        assert_eq!(
            fit(&d, &d, &Hyperparameters::default()),
            Err(ModelError::ConstantFeature("b".into()))
        );
    }

    #[test]
    fn divergence_reported() {
        let d = separable(50, 0);
        let hyper = Hyperparameters {
            learning_rate: 1e300,
            epochs: 20,
            l2: 1e3,
        };
        assert_eq!(fit(&d, &d, &hyper), Err(ModelError::NonFinite));
    }

    #[test]
    fn deterministic_and_loss_non_increasing() {
        let s = Schema::default_diabetes();
        let d = gen_synthetic(300, 5, &s);
        let (train, test) = d.split_by_patient(0.2, 1).unwrap();
        let (m1, trace) = fit_traced(&train, &test, &Hyperparameters::default()).unwrap();
        let m2 = fit(&train, &test, &Hyperparameters::default()).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(trace.len(), 501);
        for w in trace.iter().step_by(10).collect::<Vec<_>>().windows(2) {
            assert!(w[1] <= w[0], "{} > {}", w[1], w[0]);
        }
    }

    #[test]
    fn background_means_are_training_means() {
        let s = Schema::default_diabetes();
        let d = gen_synthetic(100, 9, &s);
        let (train, test) = d.split_by_patient(0.2, 2).unwrap();
        let m = fit(&train, &test, &Hyperparameters::default()).unwrap();
        let bg = m.background_means();
        assert!(bg[0].abs() < 1e-9, "standardized mean should vanish");
        let daily = train
            .records()
            .iter()
            .filter(|r| r.label_of("vegetables") == Some("daily"))
            .count() as f64
            / train.len() as f64;
        assert!((bg[5] - daily).abs() < 1e-12);
        let [p1, p99] = m.data_bounds("glucose").unwrap();
        assert!(p1 < p99);
    }

    #[test]
    fn percentile_nearest_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.01), 1.0);
        assert_eq!(percentile(&v, 0.99), 99.0);
        assert_eq!(percentile(&[4.0], 0.99), 4.0);
    }
}
