//! Model artifacts.
//!
//! An artifact is a UTF-8 JSON document:
//!
//! ```json
//! {"format": "riskview-model", "version": 1, "model": { ... }}
//! ```
//!
//! `model` holds every [`ModelParts`](riskview_core::model::ModelParts)
//! field: the per-feature encodings (standardization constants and training
//! percentiles, or one-hot levels), weights, intercept, background means,
//! train/test accuracy and the schema fingerprint. Floats are written with
//! shortest round-trip formatting, so a loaded model predicts bit-identically.

use std::path::Path;

use riskview_core::{ModelError, Schema, TrainedModel};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT: &str = "riskview-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("corrupt model artifact: {0}")]
    CorruptArtifact(String),
    #[error("unsupported artifact {format:?} version {version}")]
    UnsupportedVersion { format: String, version: u32 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Serialize)]
struct Envelope<'a> {
    format: &'a str,
    version: u32,
    model: &'a TrainedModel,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Deserialize)]
struct Body {
    model: TrainedModel,
}

pub fn save_model(model: &TrainedModel) -> Vec<u8> {
    let envelope = Envelope {
        format: FORMAT,
        version: VERSION,
        model,
    };
    let mut bytes = serde_json::to_vec_pretty(&envelope).expect("model serializes");
    bytes.push(b'\n');
    bytes
}

pub fn load_model(bytes: &[u8]) -> Result<TrainedModel, ArtifactError> {
    let corrupt = |e: serde_json::Error| ArtifactError::CorruptArtifact(e.to_string());
    let header: Header = serde_json::from_slice(bytes).map_err(corrupt)?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(ArtifactError::UnsupportedVersion {
            format: header.format,
            version: header.version,
        });
    }
    let body: Body = serde_json::from_slice(bytes).map_err(corrupt)?;
    Ok(body.model)
}

/// Loads a model and checks that it was trained under `schema`.
pub fn load_model_for_schema(bytes: &[u8], schema: &Schema) -> Result<TrainedModel, ArtifactError> {
    let model = load_model(bytes)?;
    model.check_schema(schema)?;
    Ok(model)
}

pub fn read_model_file(path: impl AsRef<Path>) -> Result<Vec<u8>, ArtifactError> {
    let path = path.as_ref();
    std::fs::read(path).map_err(|source| ArtifactError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_model_file(path: impl AsRef<Path>, model: &TrainedModel) -> Result<(), ArtifactError> {
    let path = path.as_ref();
    std::fs::write(path, save_model(model)).map_err(|source| ArtifactError::Io {
        path: path.display().to_string(),
        source,
    })
}
