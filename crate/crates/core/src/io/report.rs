//! Versioned JSON reports.
//!
//! Every report is an object `{"schema_version": .., "kind": .., ...}` with
//! the payload's fields flattened in. Floats are written in shortest
//! round-trip form, so reading a report back reproduces every number.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::{FitConfig, FitResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct EnvelopeOut<'a, T> {
    schema_version: u32,
    kind: &'a str,
    #[serde(flatten)]
    payload: &'a T,
}

#[derive(Deserialize)]
struct EnvelopeIn<T> {
    schema_version: u32,
    kind: String,
    #[serde(flatten)]
    payload: T,
}

pub fn report_to_string<T: Serialize>(kind: &str, payload: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&EnvelopeOut { schema_version: SCHEMA_VERSION, kind, payload })?;
    s.push('\n');
    Ok(s)
}

pub fn write_report<T: Serialize>(path: &Path, kind: &str, payload: &T) -> Result<()> {
    let text = report_to_string(kind, payload)?;
    std::fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Reads a report, checking its schema version and kind.
pub fn read_report<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let env: EnvelopeIn<T> = serde_json::from_str(&text)?;
    if env.schema_version != SCHEMA_VERSION {
        return Err(Error::InvalidInput(format!(
            "{}: schema version {} is not supported (expected {SCHEMA_VERSION})",
            path.display(),
            env.schema_version
        )));
    }
    if env.kind != kind {
        return Err(Error::InvalidInput(format!(
            "{}: expected a `{kind}` report, found `{}`",
            path.display(),
            env.kind
        )));
    }
    Ok(env.payload)
}

/// A fit together with everything needed to rebuild its dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub covariates: PathBuf,
    pub comparisons: PathBuf,
    /// Whether the data were restricted to the largest connected component.
    pub lcc: bool,
    /// `index_map[original] = Some(fitted)` when `lcc` renumbered items.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_map: Option<Vec<Option<usize>>>,
    pub n: usize,
    pub d: usize,
    pub l_ref: f64,
    pub covariate_scale: f64,
    pub config: FitConfig,
    pub result: FitResult,
}

pub const FIT_KIND: &str = "fit";

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Params;

    #[test]
    fn fit_record_round_trip() {
        let result = FitResult {
            params: Params::new(
                nalgebra::DVector::from_vec(vec![0.1, 0.0, -1.0 / 3.0]),
                nalgebra::DVector::from_vec(vec![std::f64::consts::PI]),
            )
            .unwrap(),
            support: vec![0, 2],
            iterations: 17,
            residual: 1.2345678901234567e-9,
            tolerance: 1e-8,
            converged: true,
            step_size: 0.07,
            objective: 12.5,
            lambda: 0.2,
            tau: 0.0,
            trace: None,
        };
        let rec = FitRecord {
            covariates: "x.csv".into(),
            comparisons: "y.csv".into(),
            lcc: true,
            index_map: Some(vec![Some(0), None, Some(1), Some(2)]),
            n: 3,
            d: 1,
            l_ref: 4.5,
            covariate_scale: 1.75,
            config: FitConfig::new(0.2, 0.0),
            result,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("fit.json");
        write_report(&p, FIT_KIND, &rec).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("\"schema_version\": 1"));
        let back: FitRecord = read_report(&p, FIT_KIND).unwrap();
        assert_eq!(back, rec);
        assert!(read_report::<FitRecord>(&p, "gof").is_err());
    }
}
