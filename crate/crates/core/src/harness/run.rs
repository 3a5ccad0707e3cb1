use serde::{Deserialize, Serialize};

use crate::detector::{
    clairvoyant_estimate, integrate_step, CfarSchedule, ConventionalDetector, CpiEstimate, DetectionTrace,
    DetectorError, DetectorKind, ProposedDetector, ProposedOptions, SyncBank,
};
use crate::estimators::EmIterate;
use crate::model::{KinematicState, PhaseConvention, Scene};
use crate::rng::{substream, Purpose};
use crate::sim::{draw_sync_offsets, generate_truth, synthesize_cpi, GroundTruth, Hypothesis, SimOptions};
use crate::tracker::{CellUnderTest, TrackerError};
use crate::C64;

use super::{ExperimentSpec, HarnessError};

/// Everything one Monte Carlo run produces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub run: u64,
    pub hypothesis: Hypothesis,
    pub trajectory: Vec<KinematicState>,
    pub sync_offsets: Vec<f64>,
    pub cell: CellUnderTest,
    pub schedule: CfarSchedule,
    /// `thresholds[i][k]` for `pfa_list[i]`.
    pub thresholds: Vec<Vec<f64>>,
    pub traces: Vec<DetectionTrace>,
    /// Offset estimates `[k][m]`; empty when no detector estimates them.
    pub sync_estimates: Vec<Vec<f64>>,
    /// Detectors whose particle weights all underflowed.
    pub diverged: Vec<DetectorKind>,
}

/// Offsets used by every run of a batch.
pub fn batch_sync_offsets(spec: &ExperimentSpec) -> Vec<f64> {
    if !spec.scene.sync_offsets.is_empty() {
        return spec.scene.sync_offsets.clone();
    }
    let mut rng = substream(spec.seed, u64::MAX, 0, 0, Purpose::SyncOffset);
    draw_sync_offsets(&spec.scene, spec.sync_margin_s, &mut rng)
}

enum Runner {
    Clairvoyant,
    Conventional(ConventionalDetector),
    Proposed(Box<ProposedDetector>, bool),
}

fn zero_estimate(prev: &DetectionTrace, m: usize, dts: &[f64]) -> CpiEstimate {
    CpiEstimate {
        state: prev.records.last().map(|r| r.state).unwrap_or_default(),
        alpha: vec![C64::new(0.0, 0.0); m],
        sync: dts.to_vec(),
        convention: PhaseConvention::Referenced,
        em_iterations: 0,
        em_converged: false,
    }
}

/// Optional per-CPI debug captures of the particle-filter detectors.
#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    pub capture_em: bool,
    pub capture_particles: bool,
    /// `(detector, k, iterates)` with `k` one-based.
    pub em: Vec<(DetectorKind, usize, Vec<EmIterate>)>,
    /// `(detector, k, states, weights)` after the update, before resampling.
    pub particles: Vec<(DetectorKind, usize, Vec<KinematicState>, Vec<f64>)>,
}

/// Simulate run `run` under `hypothesis` and execute every detector of
/// `spec` in lockstep over the CPIs.
pub fn run_one(
    spec: &ExperimentSpec,
    scene: &Scene,
    sync_offsets: &[f64],
    run: u64,
    hypothesis: Hypothesis,
) -> Result<RunResult, HarnessError> {
    run_one_with(spec, scene, sync_offsets, run, hypothesis, &mut Diagnostics::default())
}

/// [`run_one`] with debug captures.
pub fn run_one_with(
    spec: &ExperimentSpec,
    scene: &Scene,
    sync_offsets: &[f64],
    run: u64,
    hypothesis: Hypothesis,
    diag: &mut Diagnostics,
) -> Result<RunResult, HarnessError> {
    let cfg = &scene.cfg;
    let m_all = scene.num_channels();
    let num_cpis = spec.num_cpis;
    let truth: GroundTruth =
        generate_truth(scene, &spec.initial_state, num_cpis, sync_offsets, hypothesis, spec.seed, run)?;
    let cell = spec.cell.resolve(cfg, &truth.trajectory[0]);
    let all: Vec<usize> = (0..m_all).collect();
    let schedule = CfarSchedule::from_truth(scene, &truth, &all, num_cpis);
    let thresholds = spec.pfa_list.iter().map(|p| schedule.thresholds(*p)).collect::<Result<Vec<_>, _>>()?;
    let primary = &thresholds[0];

    let mut runners = Vec::with_capacity(spec.detectors.len());
    let mut traces = Vec::with_capacity(spec.detectors.len());
    for d in &spec.detectors {
        let r = match d {
            DetectorKind::Clairvoyant => Runner::Clairvoyant,
            DetectorKind::Conventional => {
                Runner::Conventional(ConventionalDetector::new(cfg, &cell, &truth.trajectory[0], all.clone()))
            }
            DetectorKind::Proposed | DetectorKind::SingleChannel(_) => {
                let active = match d {
                    DetectorKind::SingleChannel(m) => vec![*m],
                    _ => all.clone(),
                };
                let opts = ProposedOptions {
                    cell,
                    active,
                    em: spec.em_options(),
                    resample_fraction: spec.resample_fraction,
                    seed: spec.seed,
                    run,
                };
                Runner::Proposed(Box::new(ProposedDetector::new(opts)?), true)
            }
        };
        runners.push(r);
        traces.push(DetectionTrace::new(*d, run, hypothesis));
    }
    let needs_sync = runners.iter().any(|r| !matches!(r, Runner::Clairvoyant));
    let mut bank = if needs_sync { Some(SyncBank::new(scene, &truth.direct_energy, spec.sync_mode)?) } else { None };
    let opts = SimOptions { noise_free: false, direct_path: spec.direct_path };
    let mut sync_estimates = Vec::new();
    let mut diverged = Vec::new();

    for k in 0..num_cpis {
        let cubes = synthesize_cpi(k, &truth, scene, opts)?;
        let dts = match bank.as_mut() {
            Some(b) if spec.direct_path => b.update(scene, &cubes)?,
            _ => truth.sync_offsets.clone(),
        };
        if needs_sync {
            sync_estimates.push(dts.clone());
        }
        for (i, runner) in runners.iter_mut().enumerate() {
            let est = match runner {
                Runner::Clairvoyant => clairvoyant_estimate(&truth, k),
                Runner::Conventional(c) => c.process(scene, &cubes, &dts),
                Runner::Proposed(p, alive) => {
                    if *alive {
                        match p.process(scene, &cubes, &dts) {
                            Ok(e) => {
                                let d = spec.detectors[i];
                                if diag.capture_em {
                                    if let Some(em) = &p.last_em {
                                        diag.em.push((d, k + 1, em.trace.clone()));
                                    }
                                }
                                if diag.capture_particles {
                                    let (s, w) = p.last_posterior();
                                    diag.particles.push((d, k + 1, s.to_vec(), w.to_vec()));
                                }
                                e
                            }
                            Err(DetectorError::Tracker(TrackerError::Divergence)) => {
                                log::warn!("run {run}: {} diverged at CPI {}", spec.detectors[i], k + 1);
                                *alive = false;
                                diverged.push(spec.detectors[i]);
                                zero_estimate(&traces[i], m_all, &dts)
                            }
                            Err(e) => return Err(e.into()),
                        }
                    } else {
                        zero_estimate(&traces[i], m_all, &dts)
                    }
                }
            };
            integrate_step(&mut traces[i], scene, &cubes, est, primary[k]);
        }
    }

    Ok(RunResult {
        run,
        hypothesis,
        trajectory: truth.trajectory,
        sync_offsets: truth.sync_offsets,
        cell,
        schedule,
        thresholds,
        traces,
        sync_estimates,
        diverged,
    })
}
