#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use riskview::service::{router, AppState};
use riskview_core::counterfactual::generate;
use riskview_core::datacentric::{range_indicator, summarize_population};
use riskview_core::ingest::gen_synthetic;
use riskview_core::model::{fit, FeatureEncoding};
use riskview_core::{
    Attribution, DataCentricError, Dataset, FeatureValue, Hyperparameters, PatientRecord,
    RiskLevel, Schema, TrainedModel,
};
use serde_json::{json, Value};
use tower::ServiceExt;

/// 1000 synthetic patients (seed 7), split 80/20 by patient, default fit.
pub fn small_world() -> (Schema, Dataset, TrainedModel) {
    let schema = Schema::default_diabetes();
    let data = gen_synthetic(1000, 7, &schema);
    let (train, test) = data.split_by_patient(0.2, 7).unwrap();
    let model = fit(&train, &test, &Hyperparameters::default()).unwrap();
    (schema, data, model)
}

pub fn app(data: &Dataset, model: &TrainedModel) -> Router {
    router(Arc::new(
        AppState::new(model.clone(), data.clone()).unwrap(),
    ))
}

pub async fn call(
    app: &Router,
    method: Method,
    uri: &str,
    body: Option<&str>,
) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(
            body.map(|b| Body::from(b.to_string()))
                .unwrap_or_else(Body::empty),
        )
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp
        .into_body()
        .collect()
        .await
        .unwrap()
        .to_bytes()
        .to_vec();
    (status, bytes)
}

pub async fn get_json(app: &Router, uri: &str) -> (StatusCode, serde_json::Value) {
    let (status, bytes) = call(app, Method::GET, uri, None).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

pub async fn post_json(app: &Router, uri: &str, body: &str) -> (StatusCode, serde_json::Value) {
    let (status, bytes) = call(app, Method::POST, uri, Some(body)).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

/// Log-odds recomputed from the model parameters, without `encode`.
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
    z
}

pub fn oracle_prob(model: &TrainedModel, record: &PatientRecord) -> f64 {
    1.0 / (1.0 + (-oracle_logit(model, record)).exp())
}

// Expected payloads assembled directly from core calls.

pub fn factors_json(rows: Vec<Attribution>) -> Value {
    rows.into_iter()
        .map(|a| {
            json!({
                "feature": a.feature,
                "percent_share": a.percent_share,
                "direction": a.direction,
                "in_recommended_range": a.in_recommended_range,
                "note": a.note,
            })
        })
        .collect()
}

pub fn overview_json(r: &PatientRecord, model: &TrainedModel, schema: &Schema) -> Value {
    let indicators: Vec<Value> = schema
        .features()
        .iter()
        .filter_map(|spec| match range_indicator(&r.values[&spec.name], spec) {
            Ok(i) => Some(serde_json::to_value(i).unwrap()),
            Err(DataCentricError::NoRecommendedRange(_)) => None,
            Err(e) => panic!("{e}"),
        })
        .collect();
    json!({
        "patient_id": r.patient_id,
        "timestamp": r.timestamp,
        "values": r.values,
        "risk": model.predict(r).unwrap(),
        "indicators": indicators,
    })
}

pub fn recommendations_json(
    r: &PatientRecord,
    model: &TrainedModel,
    schema: &Schema,
    target: RiskLevel,
    k: usize,
    seed: u64,
) -> Value {
    let recs = generate(model, r, schema, target, k, seed).unwrap();
    recs.into_iter()
        .map(|rec| {
            json!({
                "text": rec.text,
                "feasibility": rec.feasibility,
                "risk_reduction_percent": (rec.risk_reduction * 1000.0).round() / 10.0,
                "changes": rec.changes,
            })
        })
        .collect()
}

pub fn list_json(data: &Dataset, model: &TrainedModel) -> Value {
    let mut rows: Vec<(f64, &PatientRecord)> = data
        .latest_per_patient()
        .into_iter()
        .map(|r| (model.predict_proba(r).unwrap(), r))
        .collect();
    rows.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.1.patient_id.cmp(&b.1.patient_id))
    });
    rows.into_iter()
        .map(|(_, r)| {
            let p = model.predict(r).unwrap();
            json!({
                "patient_id": r.patient_id,
                "timestamp": r.timestamp,
                "prob": p.prob,
                "level": p.level,
                "percent": p.percent,
            })
        })
        .collect()
}

pub fn population_json(data: &Dataset, schema: &Schema, marker: Option<&PatientRecord>) -> Value {
    let summary = summarize_population(data).unwrap();
    let features: Vec<Value> = summary
        .features
        .iter()
        .map(|f| {
            let spec = schema.get(&f.feature).unwrap();
            let mut v = json!({
                "feature": f.feature,
                "kind": spec.kind,
                "unit": spec.unit,
                "recommended_range": spec.recommended_range,
                "distribution": f.distribution,
            });
            if let Some(r) = marker {
                v["marker"] = serde_json::to_value(&r.values[&f.feature]).unwrap();
            }
            v
        })
        .collect();
    json!({ "n": summary.n, "features": features })
}
