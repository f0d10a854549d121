//! CSV tables and the JSON provenance sidecar.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use twr_core::oracle::MomentCheck;

use crate::run::Row;
use crate::spec::ExperimentSpec;

/// Column order of experiment CSV files.
pub const COLUMNS: [&str; 19] = [
    "preset",
    "kind",
    "scheme",
    "metric",
    "n",
    "k",
    "p_s",
    "p_s_db",
    "p_r",
    "p_r_db",
    "user_snr_db",
    "p_p",
    "p_p_db",
    "pilot_exp",
    "sweep_var",
    "sweep_value",
    "link",
    "value",
    "stderr",
];

/// Column order of oracle CSV files.
pub const ORACLE_COLUMNS: [&str; 7] = ["name", "analytic", "estimate", "stderr", "z", "samples", "status"];

fn to_csv<T: Serialize>(records: &[T], header: &[&str]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in records {
        w.serialize(r)?;
    }
    w.into_inner().context("flushing CSV buffer")
}

pub fn rows_to_csv(rows: &[Row]) -> Result<Vec<u8>> {
    to_csv(rows, &COLUMNS)
}

pub fn checks_to_csv(checks: &[MomentCheck]) -> Result<Vec<u8>> {
    to_csv(checks, &ORACLE_COLUMNS)
}

/// Everything needed to reproduce a result file.
#[derive(Debug, Serialize)]
pub struct Provenance<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub spec: &'a ExperimentSpec,
    pub columns: &'static [&'static str],
    pub rows: usize,
}

impl<'a> Provenance<'a> {
    pub fn new(spec: &'a ExperimentSpec, rows: usize) -> Self {
        Provenance {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            spec,
            columns: &COLUMNS,
            rows,
        }
    }
}

/// Sidecar path `<out>.json`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `bytes` to a temporary sibling and renames it over `path`, so a
/// failed run never leaves a truncated file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path).with_context(|| format!("moving result to {}", path.display()))?;
    Ok(())
}

/// Writes the CSV and its provenance sidecar.
pub fn write_experiment(out: &Path, spec: &ExperimentSpec, rows: &[Row]) -> Result<()> {
    let csv = rows_to_csv(rows)?;
    let mut json = serde_json::to_vec_pretty(&Provenance::new(spec, rows.len()))?;
    json.push(b'\n');
    write_atomic(out, &csv)?;
    write_atomic(&sidecar_path(out), &json)
}
