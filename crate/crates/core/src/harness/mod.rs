//! Seeded Monte Carlo batches, metrics and file outputs.

pub mod metrics;
pub mod presets;
pub mod run;
pub mod spec;

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::detector::{fmt_f, write_traces_csv, DetectionTrace, DetectorError};
use crate::model::Scene;
use crate::sim::{Hypothesis, SimError};

pub use metrics::{aggregate, compute_rmse, compute_roc, DetectorMetrics, MetricsBundle, RmseCurves, RocPoint};
pub use presets::{preset, PRESET_NAMES};
pub use run::{batch_sync_offsets, run_one, run_one_with, Diagnostics, RunResult};
pub use spec::{CellSpec, ExperimentSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{diverged} of {runs} runs diverged, above the tolerated fraction {tolerance}")]
    Divergence { diverged: usize, runs: usize, tolerance: f64 },
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<crate::tracker::TrackerError> for HarnessError {
    fn from(e: crate::tracker::TrackerError) -> Self {
        HarnessError::Detector(e.into())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.display().to_string(), source }
}

/// Metrics plus the per-run results they came from.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub metrics: MetricsBundle,
    pub results: Vec<RunResult>,
    pub sync_offsets: Vec<f64>,
}

impl ExperimentOutput {
    pub fn traces(&self) -> Vec<DetectionTrace> {
        self.results.iter().flat_map(|r| r.traces.iter().cloned()).collect()
    }
}

/// Run ids `0..runs` are H1, `runs..runs + h0_runs` are H0.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput, HarnessError> {
    spec.validate()?;
    let mut cfg = spec.scene.clone();
    let sync_offsets = batch_sync_offsets(spec);
    cfg.sync_offsets = sync_offsets.clone();
    let scene = Scene::new(cfg).map_err(|e| HarnessError::Config(e.to_string()))?;
    let jobs: Vec<(u64, Hypothesis)> = (0..spec.runs as u64)
        .map(|r| (r, Hypothesis::H1))
        .chain((0..spec.h0_runs as u64).map(|r| (spec.runs as u64 + r, Hypothesis::H0)))
        .collect();
    let work = || -> Result<Vec<RunResult>, HarnessError> {
        jobs.par_iter().map(|(r, h)| run_one(spec, &scene, &sync_offsets, *r, *h)).collect()
    };
    let results = match spec.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| HarnessError::Config(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    let diverged = results.iter().filter(|r| !r.diverged.is_empty()).count();
    if diverged as f64 > spec.divergence_tolerance * results.len() as f64 {
        return Err(HarnessError::Divergence { diverged, runs: results.len(), tolerance: spec.divergence_tolerance });
    }
    let metrics = aggregate(
        &scene.cfg,
        &spec.pfa_list,
        &spec.roc_pfa_grid,
        spec.roc_k(),
        &spec.detectors,
        spec.num_cpis,
        &results,
    );
    Ok(ExperimentOutput { metrics, results, sync_offsets })
}

#[derive(Serialize)]
struct Derived {
    wavelength_m: f64,
    element_spacing_m: f64,
    range_resolution_m: f64,
    velocity_resolution_mps: f64,
    bearing_resolution_rad: f64,
    column_len: usize,
    sync_offsets_s: Vec<f64>,
    q_inv: Vec<f64>,
    roc_k: usize,
}

#[derive(Serialize)]
struct Resolved<'a> {
    spec: &'a ExperimentSpec,
    derived: Derived,
}

/// `config_resolved.json`: the spec with every default filled in plus
/// derived quantities.
pub fn resolved_config_json(spec: &ExperimentSpec, sync_offsets: &[f64]) -> Result<String, HarnessError> {
    let mut s = spec.clone();
    s.scene = s.scene.resolved();
    s.scene.sync_offsets = sync_offsets.to_vec();
    let cfg = &s.scene;
    let derived = Derived {
        wavelength_m: cfg.wavelength(),
        element_spacing_m: cfg.spacing(),
        range_resolution_m: cfg.range_resolution(),
        velocity_resolution_mps: cfg.velocity_resolution(),
        bearing_resolution_rad: cfg.bearing_resolution_rad(),
        column_len: cfg.column_len(),
        sync_offsets_s: sync_offsets.to_vec(),
        q_inv: spec.pfa_list.iter().map(|p| crate::detector::q_inv(*p).unwrap_or(f64::NAN)).collect(),
        roc_k: spec.roc_k(),
    };
    Ok(serde_json::to_string_pretty(&Resolved { spec: &s, derived })?)
}

/// Fail early when `dir` cannot be created or written.
pub fn check_output_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let probe = dir.join(".write_probe");
    fs::write(&probe, b"").map_err(io_err(&probe))?;
    fs::remove_file(&probe).map_err(io_err(&probe))?;
    Ok(())
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(io_err(path))
}

/// Write `config_resolved.json` and, when detectors ran, `metrics.json`,
/// `traces.csv`, `roc.csv` and `rmse.csv`.
pub fn emit_outputs(dir: &Path, spec: &ExperimentSpec, out: &ExperimentOutput) -> Result<(), HarnessError> {
    check_output_dir(dir)?;
    write_file(&dir.join("config_resolved.json"), resolved_config_json(spec, &out.sync_offsets)?.as_bytes())?;
    if spec.detectors.is_empty() {
        return Ok(());
    }
    write_file(&dir.join("metrics.json"), serde_json::to_string_pretty(&out.metrics)?.as_bytes())?;

    let p = dir.join("traces.csv");
    let f = fs::File::create(&p).map_err(io_err(&p))?;
    write_traces_csv(BufWriter::new(f), &out.traces(), spec.scene.num_channels)?;

    let p = dir.join("roc.csv");
    let mut w = csv::Writer::from_path(&p)?;
    w.write_record(["detector", "k", "pfa", "pd", "pfa_empirical"])?;
    for r in &out.metrics.roc {
        w.write_record([
            r.detector.to_string(),
            out.metrics.roc_k.to_string(),
            fmt_f(r.pfa),
            fmt_f(r.pd),
            r.pfa_empirical.map(fmt_f).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(io_err(&p))?;

    let p = dir.join("rmse.csv");
    let mut w = csv::Writer::from_path(&p)?;
    w.write_record([
        "k",
        "t_s",
        "range_rmse_m",
        "velocity_rmse_mps",
        "bearing_rmse_rad",
        "range_resolution_m",
        "velocity_resolution_mps",
        "bearing_resolution_rad",
        "sync_mean_abs_error_s",
    ])?;
    let m = &out.metrics;
    let res = m.resolutions;
    for k in 0..m.rmse.range_m.len() {
        w.write_record([
            (k + 1).to_string(),
            fmt_f(m.t_s[k]),
            fmt_f(m.rmse.range_m[k]),
            fmt_f(m.rmse.velocity_mps[k]),
            fmt_f(m.rmse.bearing_rad[k]),
            fmt_f(res.range_m),
            fmt_f(res.velocity_mps),
            fmt_f(res.bearing_rad),
            m.sync_error.get(k).copied().map(fmt_f).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(io_err(&p))?;
    Ok(())
}
