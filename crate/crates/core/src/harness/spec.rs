use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::detector::DetectorKind;
use crate::estimators::{EmOptions, SyncMode};
use crate::model::{KinematicState, SceneConfig};
use crate::tracker::CellUnderTest;

use super::HarnessError;

/// How the cell under test is chosen for each run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellSpec {
    /// Range/bearing resolution cell of the first true state.
    ResolutionCell {
        vel_half_width: f64,
        grid: [usize; 2],
    },
    Fixed {
        cell: CellUnderTest,
    },
}

impl Default for CellSpec {
    fn default() -> Self {
        CellSpec::ResolutionCell { vel_half_width: 60.0, grid: [20, 20] }
    }
}

impl CellSpec {
    pub fn resolve(&self, cfg: &SceneConfig, x1: &KinematicState) -> CellUnderTest {
        match self {
            CellSpec::ResolutionCell { vel_half_width, grid } => {
                CellUnderTest::resolution_cell(cfg, x1, *vel_half_width, *grid)
            }
            CellSpec::Fixed { cell } => *cell,
        }
    }
}

fn default_initial_state() -> KinematicState {
    KinematicState::new(1000.0, 1000.0, 10.0, 50.0)
}
fn default_pfa_list() -> Vec<f64> {
    vec![1e-6]
}
fn default_detectors() -> Vec<DetectorKind> {
    vec![DetectorKind::Proposed, DetectorKind::Clairvoyant, DetectorKind::Conventional]
}
fn default_roc_grid() -> Vec<f64> {
    (0..=24).map(|i| 10f64.powf(-12.0 + 0.5 * i as f64)).filter(|p| *p < 1.0).collect()
}
fn default_sync_margin() -> f64 {
    20e-6
}
fn default_em_tol() -> f64 {
    EmOptions::default().tol_rel
}
fn default_em_iters() -> usize {
    EmOptions::default().max_iters
}
fn default_resample() -> f64 {
    0.5
}
fn default_divergence_tolerance() -> f64 {
    0.05
}
fn default_true() -> bool {
    true
}

/// A seeded Monte Carlo batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scene: SceneConfig,
    pub runs: usize,
    pub num_cpis: usize,
    #[serde(default = "default_pfa_list")]
    pub pfa_list: Vec<f64>,
    #[serde(default = "default_detectors")]
    pub detectors: Vec<DetectorKind>,
    #[serde(default)]
    pub cell: CellSpec,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_initial_state")]
    pub initial_state: KinematicState,
    /// Extra runs under H0 for empirical false-alarm rates.
    #[serde(default)]
    pub h0_runs: usize,
    #[serde(default = "default_roc_grid")]
    pub roc_pfa_grid: Vec<f64>,
    /// CPI at which the ROC is evaluated; the last one when absent.
    #[serde(default)]
    pub roc_k: Option<usize>,
    #[serde(default)]
    pub sync_mode: SyncMode,
    /// Offsets are drawn on `[0, PRI − margin)` when the scene leaves them
    /// unset.
    #[serde(default = "default_sync_margin")]
    pub sync_margin_s: f64,
    #[serde(default = "default_em_tol")]
    pub em_tol_rel: f64,
    #[serde(default = "default_em_iters")]
    pub em_max_iters: usize,
    #[serde(default = "default_resample")]
    pub resample_fraction: f64,
    #[serde(default)]
    pub workers: Option<usize>,
    /// Largest fraction of runs allowed to lose every particle weight.
    #[serde(default = "default_divergence_tolerance")]
    pub divergence_tolerance: f64,
    #[serde(default = "default_true")]
    pub direct_path: bool,
}

impl ExperimentSpec {
    pub fn new(scene: SceneConfig, runs: usize, num_cpis: usize, seed: u64) -> Self {
        ExperimentSpec {
            scene,
            runs,
            num_cpis,
            pfa_list: default_pfa_list(),
            detectors: default_detectors(),
            cell: CellSpec::default(),
            seed,
            output_dir: None,
            initial_state: default_initial_state(),
            h0_runs: 0,
            roc_pfa_grid: default_roc_grid(),
            roc_k: None,
            sync_mode: SyncMode::default(),
            sync_margin_s: default_sync_margin(),
            em_tol_rel: default_em_tol(),
            em_max_iters: default_em_iters(),
            resample_fraction: default_resample(),
            workers: None,
            divergence_tolerance: default_divergence_tolerance(),
            direct_path: true,
        }
    }

    pub fn em_options(&self) -> EmOptions {
        EmOptions { tol_rel: self.em_tol_rel, max_iters: self.em_max_iters }
    }

    pub fn roc_k(&self) -> usize {
        self.roc_k.unwrap_or(self.num_cpis)
    }

    pub fn primary_pfa(&self) -> f64 {
        self.pfa_list[0]
    }

    pub fn from_toml(s: &str) -> Result<Self, HarnessError> {
        toml::from_str(s).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        self.scene.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.runs == 0 {
            return bad("runs must be >= 1".into());
        }
        if self.num_cpis == 0 {
            return bad("num_cpis must be >= 1".into());
        }
        if self.pfa_list.is_empty() {
            return bad("pfa_list must not be empty".into());
        }
        for p in self.pfa_list.iter().chain(&self.roc_pfa_grid) {
            if !(*p > 0.0 && *p < 1.0) {
                return bad(format!("false-alarm probability {p} outside (0, 1)"));
            }
        }
        let k = self.roc_k();
        if k == 0 || k > self.num_cpis {
            return bad(format!("roc_k {k} outside 1..={}", self.num_cpis));
        }
        for d in &self.detectors {
            if let DetectorKind::SingleChannel(m) = d {
                if *m >= self.scene.num_channels {
                    return bad(format!("single_channel_{m} refers to a missing channel"));
                }
            }
        }
        if !(self.resample_fraction >= 0.0 && self.resample_fraction <= 1.0) {
            return bad("resample_fraction must lie in [0, 1]".into());
        }
        if !(self.em_tol_rel > 0.0) || self.em_max_iters == 0 {
            return bad("EM tolerance and iteration cap must be positive".into());
        }
        if !(self.sync_margin_s >= 0.0 && self.sync_margin_s < self.scene.pri_s) {
            return bad("sync_margin_s must lie in [0, pri_s)".into());
        }
        if let CellSpec::ResolutionCell { vel_half_width, grid } = self.cell {
            if !(vel_half_width >= 0.0) || grid[0] * grid[1] == 0 {
                return bad("cell grid must be non-empty with a non-negative velocity width".into());
            }
        }
        if let CellSpec::Fixed { cell } = &self.cell {
            cell.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        if !(0.0..=1.0).contains(&self.divergence_tolerance) {
            return bad("divergence_tolerance must lie in [0, 1]".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be >= 1".into());
        }
        Ok(())
    }
}
