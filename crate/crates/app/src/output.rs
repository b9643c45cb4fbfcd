//! Artifact formats and atomic file writes.
//!
//! A run directory contains
//!
//! * `diagnostics.csv` with columns
//!   `t,mass,energy,entropy,dissipation_cum,excess_L2,hess_sq_cum,dt,accepted`,
//! * `snapshots/snap_<step>.adch1` every `snapshot_stride` steps,
//! * `final.adch1`,
//! * `manifest.json`.
//!
//! Every file is written to a temporary sibling and renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anideg_core::estimates::{CheckReport, DiagnosticsRecord};
use anideg_core::grid::{read_snapshot, write_snapshot};
use anideg_core::{Error, Field};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

use crate::error::{AppError, AppResult};

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const FINAL_SNAPSHOT: &str = "final.adch1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SNAPSHOT_DIR: &str = "snapshots";

/// CSV row; field order is the column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub entropy: f64,
    pub dissipation_cum: f64,
    #[serde(rename = "excess_L2")]
    pub excess_l2: f64,
    pub hess_sq_cum: f64,
    pub dt: f64,
    pub accepted: bool,
}

impl From<&DiagnosticsRecord> for DiagnosticsRow {
    fn from(r: &DiagnosticsRecord) -> Self {
        Self {
            t: r.t,
            mass: r.mass,
            energy: r.energy,
            entropy: r.entropy,
            dissipation_cum: r.dissipation_cum,
            excess_l2: r.excess_l2,
            hess_sq_cum: r.hess_sq_cum,
            dt: r.dt,
            accepted: r.accepted,
        }
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> AppResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| AppError::Io(e.to_string()))?;
    Ok(())
}

pub fn diagnostics_csv(records: &[DiagnosticsRecord]) -> AppResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(DiagnosticsRow::from(r))?;
    }
    if records.is_empty() {
        w.write_record([
            "t",
            "mass",
            "energy",
            "entropy",
            "dissipation_cum",
            "excess_L2",
            "hess_sq_cum",
            "dt",
            "accepted",
        ])?;
    }
    w.into_inner().map_err(|e| AppError::Io(e.to_string()))
}

pub fn read_diagnostics(path: &Path) -> AppResult<Vec<DiagnosticsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<DiagnosticsRow>, _>>()?)
}

pub fn snapshot_bytes(field: &Field, t: f64) -> AppResult<Vec<u8>> {
    let mut buf = Vec::new();
    write_snapshot(&mut buf, field, t)?;
    Ok(buf)
}

pub fn load_snapshot(path: &Path) -> AppResult<(Field, f64)> {
    let bytes = fs::read(path).map_err(|e| AppError::Io(format!("{}: {e}", path.display())))?;
    Ok(read_snapshot(&bytes[..])?)
}

pub fn snapshot_name(step: usize) -> String {
    format!("snap_{step:08}.adch1")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
}

impl From<&CheckReport> for CheckRow {
    fn from(c: &CheckReport) -> Self {
        Self {
            name: c.name.clone(),
            lhs: c.lhs,
            rhs: c.rhs,
            margin: c.margin,
            pass: c.pass,
        }
    }
}

/// Turns a check outcome into a row; a violated estimate becomes a failing
/// row, any other error is propagated.
pub fn check_row(name: &str, outcome: anideg_core::Result<CheckReport>) -> AppResult<CheckRow> {
    match outcome {
        Ok(r) => Ok(CheckRow::from(&r)),
        Err(Error::EstimateViolated { lhs, rhs, .. }) => Ok(CheckRow {
            name: name.to_string(),
            lhs,
            rhs,
            margin: rhs - lhs,
            pass: false,
        }),
        Err(e) => Err(e.into()),
    }
}

pub fn checks_csv(rows: &[CheckRow]) -> AppResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| AppError::Io(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: usize,
    pub final_record: Option<DiagnosticsRow>,
    pub kappa: Option<f64>,
    pub anisotropy_constants: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub code_version: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub artifacts: Vec<PathBuf>,
    pub summary: RunSummary,
    pub checks: Vec<CheckRow>,
}

pub fn unix_now() -> f64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}
