//! HTTP API over an immutable snapshot of schema, model and dataset.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use riskview_core::datacentric::{risk_history, summarize_population};
use riskview_core::{
    CounterfactualError, DataCentricError, Dataset, ExplainError, ModelError, PatientRecord,
    PopulationSummary, RiskHistory, RiskLevel, Schema, TrainedModel,
};
use serde::Serialize;
use tower_http::cors::{Any, CorsLayer};

use crate::payload::{self, WhatIfError, WhatIfRequest};

pub const DEFAULT_K: usize = 3;
pub const DEFAULT_TARGET: RiskLevel = RiskLevel::Low;

pub struct AppState {
    schema: Schema,
    model: TrainedModel,
    dataset: Dataset,
    summary: PopulationSummary,
}

impl AppState {
    pub fn new(model: TrainedModel, dataset: Dataset) -> Result<Self, DataCentricError> {
        let schema = dataset.schema().clone();
        model.check_schema(&schema)?;
        let summary = summarize_population(&dataset)?;
        Ok(Self {
            schema,
            model,
            dataset,
            summary,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn model(&self) -> &TrainedModel {
        &self.model
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn summary(&self) -> &PopulationSummary {
        &self.summary
    }

    fn latest(&self, id: &str) -> Result<&PatientRecord, ApiError> {
        self.dataset.latest(id).ok_or_else(|| {
            ApiError::new(
                StatusCode::NOT_FOUND,
                "UnknownPatient",
                format!("no patient {id:?}"),
            )
        })
    }
}

#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            detail: None,
        }
    }

    fn unprocessable(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        tracing::error!("{e}");
        Self::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "Internal",
            "internal error",
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

impl From<CounterfactualError> for ApiError {
    fn from(e: CounterfactualError) -> Self {
        use CounterfactualError as E;
        let code = match &e {
            E::AlreadyAtTarget => {
                return Self::new(StatusCode::CONFLICT, "AlreadyAtTarget", e.to_string())
            }
            E::UnknownFeature(_) => "UnknownFeature",
            E::BadValue { .. } => "BadValue",
            E::ZeroK => "ZeroK",
            _ => return Self::internal(e),
        };
        Self::unprocessable(code, e.to_string())
    }
}

impl From<WhatIfError> for ApiError {
    fn from(e: WhatIfError) -> Self {
        match e {
            WhatIfError::Counterfactual(e) => e.into(),
            WhatIfError::Explain(e) => Self::internal(e),
        }
    }
}

impl From<ExplainError> for ApiError {
    fn from(e: ExplainError) -> Self {
        Self::internal(e)
    }
}

impl From<DataCentricError> for ApiError {
    fn from(e: DataCentricError) -> Self {
        Self::internal(e)
    }
}

impl From<ModelError> for ApiError {
    fn from(e: ModelError) -> Self {
        Self::internal(e)
    }
}

type Shared = State<Arc<AppState>>;
type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/patients", get(list_patients))
        .route("/api/patients/{id}", get(patient))
        .route("/api/patients/{id}/factors", get(factors))
        .route("/api/patients/{id}/recommendations", get(recommendations))
        .route("/api/patients/{id}/history", get(history))
        .route("/api/patients/{id}/whatif", post(what_if))
        .route("/api/population/summary", get(population))
        .with_state(state)
}

/// CORS for the dashboard origin; `*` allows any origin.
pub fn cors(origin: &str) -> Result<CorsLayer, axum::http::header::InvalidHeaderValue> {
    let layer = CorsLayer::new().allow_methods(Any).allow_headers(Any);
    Ok(if origin == "*" {
        layer.allow_origin(Any)
    } else {
        layer.allow_origin(HeaderValue::from_str(origin)?)
    })
}

async fn list_patients(State(s): Shared) -> ApiResult<Vec<payload::PatientListItem>> {
    Ok(Json(payload::patient_list(&s.dataset, &s.model)?))
}

async fn patient(State(s): Shared, Path(id): Path<String>) -> ApiResult<payload::PatientOverview> {
    let r = s.latest(&id)?;
    Ok(Json(payload::patient_overview(r, &s.model, &s.schema)?))
}

async fn factors(State(s): Shared, Path(id): Path<String>) -> ApiResult<Vec<payload::FactorRow>> {
    let r = s.latest(&id)?;
    Ok(Json(payload::factors(r, &s.model, &s.schema)?))
}

async fn recommendations(
    State(s): Shared,
    Path(id): Path<String>,
    Query(q): Query<BTreeMap<String, String>>,
) -> ApiResult<Vec<payload::RecommendationRow>> {
    let r = s.latest(&id)?;
    let target = match q.get("target") {
        Some(t) => t
            .parse::<RiskLevel>()
            .map_err(|e| ApiError::unprocessable("BadTarget", e.to_string()))?,
        None => DEFAULT_TARGET,
    };
    let k = parse_param(&q, "k", DEFAULT_K)?;
    let seed = parse_param(&q, "seed", 0u64)?;
    Ok(Json(payload::recommendations(
        r, &s.model, &s.schema, target, k, seed,
    )?))
}

fn parse_param<T: std::str::FromStr>(
    q: &BTreeMap<String, String>,
    name: &str,
    default: T,
) -> Result<T, ApiError> {
    match q.get(name) {
        Some(v) => v.parse().map_err(|_| {
            ApiError::unprocessable(
                "BadParameter",
                format!("{name}: expected an integer, got {v:?}"),
            )
        }),
        None => Ok(default),
    }
}

async fn history(State(s): Shared, Path(id): Path<String>) -> ApiResult<RiskHistory> {
    s.latest(&id)?;
    Ok(Json(risk_history(&s.dataset.history(&id), &s.model)?))
}

async fn population(
    State(s): Shared,
    Query(q): Query<BTreeMap<String, String>>,
) -> ApiResult<payload::PopulationView> {
    let marker = match q.get("patient") {
        Some(id) => Some(s.latest(id)?),
        None => None,
    };
    Ok(Json(payload::population(&s.summary, &s.schema, marker)))
}

async fn what_if(
    State(s): Shared,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<payload::WhatIfResponse> {
    let r = s.latest(&id)?;
    let req: WhatIfRequest = serde_json::from_slice(&body).map_err(|e| {
        let mut err = ApiError::unprocessable(
            "MalformedBody",
            "expected {\"overrides\": {feature: value}}",
        );
        err.detail = Some(e.to_string());
        err
    })?;
    Ok(Json(payload::what_if(
        r,
        &s.model,
        &s.schema,
        &req.overrides,
    )?))
}
