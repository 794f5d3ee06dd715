//! File formats: model files, data ingestion, result reports and network export.
//!
//! Model files and reports are JSON documents carrying a `format_version`.

mod data;
mod report;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;

pub use data::{
    align_moments, ingest_data, ingest_str, write_covariance_csv, write_raw_csv, DataKind, Ingested,
    COVARIANCE_SYMMETRY_TOLERANCE,
};
pub use report::{
    export_network, read_report, report_from_str, report_to_string, rerun, run_job, write_report, Estimate, Job,
    LassoSummary, NetworkEstimate, NetworkFormat, Provenance, Report,
};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    #[serde(flatten)]
    spec: ModelSpec,
}

fn check_version(value: &serde_json::Value) -> Result<()> {
    match value.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == FORMAT_VERSION as u64 => Ok(()),
        Some(v) => Err(Error::MalformedFile(format!(
            "unsupported format_version {v} (expected {FORMAT_VERSION})"
        ))),
        None => Err(Error::MalformedFile("missing format_version".into())),
    }
}

pub fn model_to_string(spec: &ModelSpec) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ModelFile {
        format_version: FORMAT_VERSION,
        spec: spec.clone(),
    })?)
}

/// Parses and validates a model file.
pub fn model_from_str(text: &str) -> Result<ModelSpec> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::MalformedFile(e.to_string()))?;
    check_version(&value)?;
    let file: ModelFile = serde_json::from_value(value).map_err(|e| Error::MalformedFile(e.to_string()))?;
    file.spec.validate()?;
    Ok(file.spec)
}

pub fn read_model_file(path: &Path) -> Result<ModelSpec> {
    model_from_str(&std::fs::read_to_string(path)?)
}

pub fn write_model_file(path: &Path, spec: &ModelSpec) -> Result<()> {
    std::fs::write(path, model_to_string(spec)? + "\n")?;
    Ok(())
}

/// Serializes `f64` fields that may be NaN as `null`, and reads `null` back as NaN.
pub(crate) mod nullable_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}
