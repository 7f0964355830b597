//! Risk scoring and explanation primitives for tabular patient records.
//!
//! The crate is `no_std` (it needs `alloc`) and performs no IO. It covers:
//!
//! - [`ingest`]: feature schemas, patient records, validation and a seeded
//!   synthetic cohort generator.
//! - [`model`]: an L2-regularized logistic regression over standardized,
//!   one-hot encoded features, plus risk bucketing.
//! - [`attributions`]: exact Shapley attributions for the linear model in
//!   log-odds space and the actionable "important risk factors" view.
//! - [`counterfactual`]: actionable recommendations with feasibility labels,
//!   risk-reduction estimates and what-if evaluation.
//! - [`datacentric`]: range indicators, population summaries and risk
//!   history trends.
//!
//! File formats, the HTTP service and the CLI live in the `riskview` crate.
#![cfg_attr(not(test), no_std)]
#![warn(missing_debug_implementations)]

extern crate alloc;

pub mod attributions;
pub mod counterfactual;
pub mod datacentric;
pub mod ingest;
mod math;
pub mod model;

pub use attributions::{Attribution, Direction, EncodedPhi, ExplainError};
pub use counterfactual::{
    CounterfactualError, CounterfactualRecommendation, Feasibility, FeatureChange,
};
pub use datacentric::{
    DataCentricError, PopulationSummary, RangeIndicator, RiskHistory, Trend, ZoneColor,
};
pub use ingest::{
    Dataset, FeatureKind, FeatureSpec, FeatureValue, IngestError, PatientRecord, Schema,
    SchemaError,
};
pub use model::{
    bucket_risk, Hyperparameters, ModelError, RiskLevel, RiskPrediction, TrainedModel,
};
