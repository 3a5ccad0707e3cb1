//! Long-time integration of per-CPI log-likelihood ratios and the
//! detection test.

pub mod cfar;
pub mod pipeline;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::EstimatorError;
use crate::likelihood::cpi_log_lr;
use crate::model::{DataCube, KinematicState, ModelError, PhaseConvention, Scene};
use crate::sim::{Hypothesis, SimError};
use crate::tracker::TrackerError;
use crate::C64;

pub use cfar::{cfar_threshold, q_inv, snr_accounting, CfarParams, CfarSchedule, SnrAccounting};
pub use pipeline::{
    clairvoyant_estimate, conventional_cell_state, ConventionalDetector, ProposedDetector, ProposedOptions, SyncBank,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectorError {
    #[error("false-alarm probability {0} outside (0, 1)")]
    InvalidPfa(f64),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Which statistic a trace integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DetectorKind {
    Proposed,
    Clairvoyant,
    Conventional,
    /// Proposed pipeline restricted to one channel.
    SingleChannel(usize),
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DetectorKind::Proposed => write!(f, "proposed"),
            DetectorKind::Clairvoyant => write!(f, "clairvoyant"),
            DetectorKind::Conventional => write!(f, "conventional"),
            DetectorKind::SingleChannel(m) => write!(f, "single_channel_{m}"),
        }
    }
}

impl FromStr for DetectorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "proposed" => Ok(DetectorKind::Proposed),
            "clairvoyant" => Ok(DetectorKind::Clairvoyant),
            "conventional" => Ok(DetectorKind::Conventional),
            _ => s
                .strip_prefix("single_channel_")
                .and_then(|m| m.parse().ok())
                .map(DetectorKind::SingleChannel)
                .ok_or_else(|| format!("unknown detector `{s}`")),
        }
    }
}

impl TryFrom<String> for DetectorKind {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<DetectorKind> for String {
    fn from(k: DetectorKind) -> String {
        k.to_string()
    }
}

/// Point estimates a detector plugs into the per-CPI statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct CpiEstimate {
    pub state: KinematicState,
    pub alpha: Vec<C64>,
    pub sync: Vec<f64>,
    pub convention: PhaseConvention,
    pub em_iterations: usize,
    pub em_converged: bool,
}

/// One CPI of a detection trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpiRecord {
    /// One-based CPI index.
    pub k: usize,
    pub t_s: f64,
    pub contribution: f64,
    /// Running sum `log L_k`.
    pub log_lr: f64,
    pub threshold_log: f64,
    pub decision: Hypothesis,
    pub state: KinematicState,
    pub alpha: Vec<C64>,
    pub sync: Vec<f64>,
    pub per_channel: Vec<f64>,
    pub em_iterations: usize,
    pub em_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionTrace {
    pub detector: DetectorKind,
    pub run: u64,
    pub hypothesis: Hypothesis,
    pub records: Vec<CpiRecord>,
}

impl DetectionTrace {
    pub fn new(detector: DetectorKind, run: u64, hypothesis: Hypothesis) -> Self {
        DetectionTrace { detector, run, hypothesis, records: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `log L_k` for the latest CPI, zero before the first.
    pub fn log_lr(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.log_lr)
    }

    pub fn log_lrs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.log_lr).collect()
    }

    /// First one-based `k` with `log L_k > thresholds[k − 1]`.
    pub fn first_crossing(&self, thresholds: &[f64]) -> Option<usize> {
        self.records.iter().zip(thresholds).find(|(r, t)| r.log_lr > **t).map(|(r, _)| r.k)
    }
}

/// Append the statistic of CPI `k` evaluated at `est` and the running sum.
pub fn integrate_step<'a>(
    trace: &'a mut DetectionTrace,
    scene: &Scene,
    cubes: &[DataCube],
    est: CpiEstimate,
    threshold_log: f64,
) -> &'a CpiRecord {
    let c = cpi_log_lr(scene, cubes, &est.state, &est.alpha, &est.sync, est.convention);
    let k = trace.records.len() + 1;
    let log_lr = trace.log_lr() + c.total;
    trace.records.push(CpiRecord {
        k,
        t_s: k as f64 * scene.cfg.illum_period_s,
        contribution: c.total,
        log_lr,
        threshold_log,
        decision: if log_lr > threshold_log { Hypothesis::H1 } else { Hypothesis::H0 },
        state: est.state,
        alpha: est.alpha,
        sync: est.sync,
        per_channel: c.per_channel,
        em_iterations: est.em_iterations,
        em_converged: est.em_converged,
    });
    trace.records.last().expect("just pushed")
}

/// `H1` iff `log L_k > log 𝒯_k` for the one-based CPI `k`.
pub fn decide(trace: &DetectionTrace, k: usize) -> Hypothesis {
    let r = &trace.records[k - 1];
    if r.log_lr > r.threshold_log {
        Hypothesis::H1
    } else {
        Hypothesis::H0
    }
}

/// Write traces as CSV with one row per CPI.
pub fn write_traces_csv<W: Write>(w: W, traces: &[DetectionTrace], num_channels: usize) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> =
        ["run_id", "detector", "hypothesis", "k", "t_s", "log_lr", "threshold_log", "decision"]
            .iter()
            .map(|s| s.to_string())
            .collect();
    header.extend(["x_hat", "y_hat", "vx_hat", "vy_hat"].iter().map(|s| s.to_string()));
    for prefix in ["alpha_re", "alpha_im", "dt_hat", "contrib"] {
        header.extend((0..num_channels).map(|m| format!("{prefix}_{m}")));
    }
    out.write_record(&header)?;
    for t in traces {
        for r in &t.records {
            let mut row = vec![
                t.run.to_string(),
                t.detector.to_string(),
                format!("{:?}", t.hypothesis),
                r.k.to_string(),
                fmt_f(r.t_s),
                fmt_f(r.log_lr),
                fmt_f(r.threshold_log),
                format!("{:?}", r.decision),
            ];
            row.extend(r.state.to_array().iter().map(|v| fmt_f(*v)));
            row.extend((0..num_channels).map(|m| fmt_f(r.alpha.get(m).map_or(0.0, |a| a.re))));
            row.extend((0..num_channels).map(|m| fmt_f(r.alpha.get(m).map_or(0.0, |a| a.im))));
            row.extend((0..num_channels).map(|m| fmt_f(r.sync.get(m).copied().unwrap_or(0.0))));
            row.extend((0..num_channels).map(|m| fmt_f(r.per_channel.get(m).copied().unwrap_or(0.0))));
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Shortest round-trip formatting used in every CSV output.
pub fn fmt_f(v: f64) -> String {
    format!("{v:e}")
}
