//! Schema config files.
//!
//! A schema is a TOML document with one `[[feature]]` table per feature, in
//! column order. Keys match the [`FeatureSpec`] fields:
//!
//! ```toml
//! [[feature]]
//! name = "glucose"
//! kind = "continuous"
//! actionable = true
//! unit = "mmol/L"
//! recommended_range = [3.9, 5.6]
//! bounds = [3.0, 15.0]
//!
//! [[feature]]
//! name = "activity"
//! kind = "categorical"
//! actionable = true
//! categories = ["low", "moderate", "high"]
//! ordinal_risk = { low = 1, moderate = 2, high = 3 }
//! templates = { moderate = "Exercise daily for 30 minutes" }
//! ```

use std::path::Path;

use riskview_core::{FeatureSpec, Schema, SchemaError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SchemaFileError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing schema: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Invalid(#[from] SchemaError),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaDocument {
    feature: Vec<FeatureSpec>,
}

pub fn parse_schema(text: &str) -> Result<Schema, SchemaFileError> {
    let doc: SchemaDocument = toml::from_str(text)?;
    Ok(Schema::new(doc.feature)?)
}

pub fn render_schema(schema: &Schema) -> String {
    let doc = SchemaDocument {
        feature: schema.features().to_vec(),
    };
    toml::to_string(&doc).expect("schema serializes to TOML")
}

pub fn load_schema(path: impl AsRef<Path>) -> Result<Schema, SchemaFileError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SchemaFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_schema(&text)
}
