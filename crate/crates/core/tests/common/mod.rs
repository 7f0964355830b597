#![allow(dead_code)]

use riskview_core::ingest::gen_synthetic;
use riskview_core::model::{fit, FeatureEncoding};
use riskview_core::{Dataset, FeatureValue, Hyperparameters, PatientRecord, Schema, TrainedModel};

/// Log-odds recomputed from the serialized parameters, without `encode`.
pub fn oracle_logit(model: &TrainedModel, record: &PatientRecord) -> f64 {
    let parts = model.parts();
    let mut z = parts.intercept;
    let mut col = 0;
    for f in &parts.features {
        match (&f.encoding, &record.values[&f.name]) {
            (FeatureEncoding::Standardized { mean, std_dev, .. }, FeatureValue::Number(x)) => {
                z += parts.weights[col] * (x - mean) / std_dev;
                col += 1;
            }
            (FeatureEncoding::OneHot { levels }, FeatureValue::Label(l)) => {
                for (j, level) in levels.iter().enumerate().skip(1) {
                    if level == l {
                        z += parts.weights[col + j - 1];
                    }
                }
                col += levels.len() - 1;
            }
            (enc, v) => panic!("{v:?} does not fit {enc:?}"),
        }
    }
    assert_eq!(col, parts.weights.len());
    z
}

pub fn oracle_prob(model: &TrainedModel, record: &PatientRecord) -> f64 {
    1.0 / (1.0 + (-oracle_logit(model, record)).exp())
}

/// 1000 synthetic patients (seed 7), split 80/20 by patient, default fit.
pub fn small_world() -> (Schema, Dataset, TrainedModel) {
    let schema = Schema::default_diabetes();
    let data = gen_synthetic(1000, 7, &schema);
    let (train, test) = data.split_by_patient(0.2, 7).unwrap();
    let model = fit(&train, &test, &Hyperparameters::default()).unwrap();
    (schema, data, model)
}
