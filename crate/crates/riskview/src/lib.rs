//! File formats, model artifacts, the JSON API and the command line for
//! [`riskview_core`].

pub mod artifact;
pub mod csv_io;
pub mod payload;
pub mod schema_file;
pub mod service;

pub use artifact::{
    load_model, load_model_for_schema, read_model_file, save_model, write_model_file, ArtifactError,
};
pub use csv_io::{load_csv, read_csv, save_csv, write_csv, CsvError};
pub use schema_file::{load_schema, parse_schema, render_schema, SchemaFileError};
pub use service::{router, AppState};
