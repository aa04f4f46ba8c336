//! Curve files and result manifests.
//!
//! Curves are written as `t,mean,stderr,n` with every number in `{:.16e}`
//! form, which round-trips an `f64` exactly. The manifest layout is described
//! in `docs/manifest.md`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use scramble::analysis::DecayFit;
use scramble::correlators::{DecayCurve, TimeGrid};
use serde::{Deserialize, Serialize};

use crate::config::Resolved;
use crate::error::{LabError, LabResult};

pub const SCHEMA_VERSION: u32 = 1;
pub const CSV_HEADER: [&str; 4] = ["t", "mean", "stderr", "n"];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LabError + '_ {
    move |source| LabError::Io { path: path.display().to_string(), source }
}

fn csv_err(path: &Path, e: csv::Error) -> LabError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(source) => LabError::Io { path: path.display().to_string(), source },
            _ => unreachable!(),
        }
    } else {
        LabError::Format { path: path.display().to_string(), reason: e.to_string() }
    }
}

pub fn curve_file_name(experiment: &str, label: &str, hash: &str) -> String {
    format!("{experiment}_{label}_{hash}.csv")
}

/// Serializes a curve to CSV bytes.
pub fn curve_to_csv(curve: &DecayCurve) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for i in 0..curve.len() {
        w.write_record([
            format!("{:.16e}", curve.times[i]),
            format!("{:.16e}", curve.mean[i]),
            format!("{:.16e}", curve.stderr[i]),
            curve.n_realizations.to_string(),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn write_curve(path: &Path, curve: &DecayCurve) -> LabResult<()> {
    std::fs::write(path, curve_to_csv(curve)).map_err(io_err(path))
}

/// Reads a curve file; the label is taken from `label`.
pub fn read_curve(path: &Path, label: &str) -> LabResult<DecayCurve> {
    let fmt = |reason: String| LabError::Format { path: path.display().to_string(), reason };
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(fmt(format!("expected header t,mean,stderr,n, found {}", header.iter().collect::<Vec<_>>().join(","))));
    }
    let (mut t, mut mean, mut stderr) = (Vec::new(), Vec::new(), Vec::new());
    let mut n = None;
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let num = |k: usize| -> LabResult<f64> {
            rec[k].trim().parse::<f64>().map_err(|e| fmt(format!("row {}: column {}: {e}", line + 2, CSV_HEADER[k])))
        };
        t.push(num(0)?);
        mean.push(num(1)?);
        stderr.push(num(2)?);
        let k: usize = rec[3].trim().parse().map_err(|e| fmt(format!("row {}: column n: {e}", line + 2)))?;
        if *n.get_or_insert(k) != k {
            return Err(fmt(format!("row {}: realization count changes", line + 2)));
        }
    }
    let grid = TimeGrid::new(t).map_err(|e| fmt(e.to_string()))?;
    let mut curve = DecayCurve::from_values(label, &grid, mean).map_err(|e| fmt(e.to_string()))?;
    curve.stderr = stderr;
    curve.n_realizations = n.unwrap_or(1);
    Ok(curve)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub label: String,
    /// File name relative to the manifest's directory.
    pub file: String,
    pub n_points: usize,
    pub n_realizations: usize,
    /// Raw value at `t = 0` for curves stored normalized.
    pub scale: f64,
    pub thermal_prefactor: Option<f64>,
    pub max_imag_residue: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub curve: String,
    pub fit: Option<DecayFit>,
    /// Why the fit was rejected, when `fit` is absent.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub manifest: String,
    pub model: Option<String>,
    pub rate_lambda: Option<f64>,
    pub r_squared: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub parameter: String,
    pub curve: String,
    pub rows: Vec<SweepRow>,
    pub table_file: String,
    pub rate_law: Option<DecayFit>,
    pub linear_law: Option<DecayFit>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultManifest {
    pub schema_version: u32,
    pub experiment: String,
    pub config_hash: String,
    pub config: Resolved,
    pub rng_algorithm: String,
    pub code_version: String,
    pub threads: usize,
    pub started_unix_seconds: u64,
    pub wall_clock_seconds: f64,
    pub curves: Vec<CurveRecord>,
    pub fits: Vec<FitRecord>,
    /// Scalar diagnostics specific to the experiment.
    pub extras: BTreeMap<String, f64>,
    pub sweep: Option<SweepRecord>,
}

impl ResultManifest {
    pub fn file_name(&self) -> String {
        let kind = if self.sweep.is_some() { "sweep_manifest" } else { "manifest" };
        format!("{}_{kind}_{}.json", self.experiment, self.config_hash)
    }

    pub fn write(&self, dir: &Path) -> LabResult<PathBuf> {
        let path = dir.join(self.file_name());
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, json + "\n").map_err(io_err(&path))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> LabResult<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let m: Self = serde_json::from_str(&text)
            .map_err(|e| LabError::Format { path: path.display().to_string(), reason: e.to_string() })?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(LabError::Format {
                path: path.display().to_string(),
                reason: format!("schema_version {} is not supported", m.schema_version),
            });
        }
        Ok(m)
    }
}

/// Writes the `(value, λ)` table of a sweep.
pub fn write_sweep_table(path: &Path, rows: &[SweepRow]) -> LabResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["value", "model", "lambda", "r_squared"]).expect("in-memory write");
    let num = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
    for r in rows {
        w.write_record([
            format!("{:.16e}", r.value),
            r.model.clone().unwrap_or_default(),
            num(r.rate_lambda),
            num(r.r_squared),
        ])
        .expect("in-memory write");
    }
    std::fs::write(path, w.into_inner().expect("in-memory flush")).map_err(io_err(path))
}

pub fn ensure_dir(dir: &Path) -> LabResult<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}
