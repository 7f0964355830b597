//! Patient CSV files.
//!
//! Header: `patient_id,timestamp,label,<features in schema order>`. Columns
//! are matched by name, so their order may differ. `timestamp` is an ISO-8601
//! date, `label` is `1`, `0` or empty, numbers use `.` as decimal separator.
//! Missing values are rejected.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use riskview_core::{Dataset, FeatureValue, IngestError, PatientRecord, Schema};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CsvError {
    pub fn ingest(&self) -> Option<&IngestError> {
        match self {
            Self::Ingest(e) => Some(e),
            _ => None,
        }
    }
}

const ID: &str = "patient_id";
const TIMESTAMP: &str = "timestamp";
const LABEL: &str = "label";

fn parse_date(raw: &str) -> Result<NaiveDate, String> {
    raw.trim()
        .parse()
        .map_err(|e| format!("bad timestamp {raw:?}: {e}"))
}

pub fn read_csv(reader: impl Read, schema: &Schema) -> Result<Dataset, CsvError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let id_col = column(ID)?;
    let ts_col = column(TIMESTAMP)?;
    let label_col = column(LABEL).ok();
    let feature_cols = schema
        .features()
        .iter()
        .map(|f| column(&f.name).map(|c| (f, c)))
        .collect::<Result<Vec<_>, _>>()?;

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let row_no = i + 1;
        let bad = |feature: &str, reason: String| IngestError::BadValue {
            row: row_no,
            feature: feature.to_string(),
            reason,
        };
        let cell = |c: usize| row.get(c).unwrap_or("");
        let patient_id = cell(id_col).trim();
        if patient_id.is_empty() {
            return Err(bad(ID, "missing patient id".into()).into());
        }
        let timestamp = parse_date(cell(ts_col)).map_err(|r| bad(TIMESTAMP, r))?;
        let label = match label_col.map(|c| cell(c).trim()) {
            None | Some("") => None,
            Some("1") => Some(true),
            Some("0") => Some(false),
            Some(other) => return Err(bad(LABEL, format!("expected 0 or 1, got {other:?}")).into()),
        };
        let mut values = BTreeMap::new();
        for (spec, c) in &feature_cols {
            let value = spec.parse_value(cell(*c)).map_err(|r| bad(&spec.name, r))?;
            values.insert(spec.name.clone(), value);
        }
        records.push(PatientRecord {
            patient_id: patient_id.to_string(),
            timestamp,
            values,
            label,
        });
    }
    Ok(Dataset::new(schema.clone(), records)?)
}

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset, CsvError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| CsvError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(std::io::BufReader::new(file), schema)
}

pub fn write_csv(writer: impl Write, data: &Dataset) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(writer);
    let schema = data.schema();
    let mut header = vec![ID, TIMESTAMP, LABEL];
    header.extend(schema.names());
    w.write_record(&header)?;
    for r in data.records() {
        let mut row = Vec::with_capacity(header.len());
        row.push(r.patient_id.clone());
        row.push(r.timestamp.to_string());
        row.push(match r.label {
            Some(true) => "1".into(),
            Some(false) => "0".into(),
            None => String::new(),
        });
        for name in schema.names() {
            // Display for f64 is the shortest string that parses back exactly.
            row.push(
                r.value(name)
                    .map(FeatureValue::to_string)
                    .unwrap_or_default(),
            );
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|source| CsvError::Io {
        path: "<writer>".into(),
        source,
    })?;
    Ok(())
}

pub fn save_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<(), CsvError> {
    let path = path.as_ref();
    let io = |source| CsvError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io)?;
    write_csv(std::io::BufWriter::new(file), data)
}
