//! Per-CPI estimators feeding [`integrate_step`](super::integrate_step).

use crate::estimators::{estimate_sync, run_em, EmOptions, EmState, SyncEstimate, SyncHistory, SyncMode};
use crate::likelihood::{ProductTable, WhitenedProducts};
use crate::model::{ChannelSignal, DataCube, KinematicState, PhaseConvention, Scene, SceneConfig};
use crate::rng::{substream, Purpose};
use crate::sim::GroundTruth;
use crate::tracker::{init_particles, CellUnderTest, ParticleCloud};
use crate::C64;

use super::{CpiEstimate, DetectorError};

/// Running offset estimates of every bi-static channel.
#[derive(Debug, Clone)]
pub struct SyncBank {
    mode: SyncMode,
    histories: Vec<Option<SyncHistory>>,
    pub last: Vec<Option<SyncEstimate>>,
}

impl SyncBank {
    /// `energies[m]` is the direct-path pulse energy of channel `m`.
    pub fn new(scene: &Scene, energies: &[f64], mode: SyncMode) -> Result<Self, DetectorError> {
        let mut histories = vec![None];
        for (m, e) in energies.iter().enumerate().skip(1) {
            histories.push(Some(SyncHistory::new(scene, m, *e, false)?));
        }
        let last = vec![None; histories.len()];
        Ok(SyncBank { mode, histories, last })
    }

    /// Add one CPI and re-run coarse grid plus golden-section search.
    pub fn update(&mut self, scene: &Scene, cubes: &[DataCube]) -> Result<Vec<f64>, DetectorError> {
        let mut out = vec![0.0; self.histories.len()];
        for (m, h) in self.histories.iter_mut().enumerate() {
            if let Some(h) = h {
                h.push(scene, &cubes[m]);
                let est = estimate_sync(scene, h, self.mode)?;
                out[m] = est.dt;
                self.last[m] = Some(est);
            }
        }
        Ok(out)
    }
}

/// Plug-in estimate from the ground truth.
pub fn clairvoyant_estimate(truth: &GroundTruth, k: usize) -> CpiEstimate {
    CpiEstimate {
        state: truth.trajectory[k],
        alpha: truth.alpha(k),
        sync: truth.sync_offsets.clone(),
        convention: PhaseConvention::Carrier,
        em_iterations: 0,
        em_converged: true,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProposedOptions {
    pub cell: CellUnderTest,
    pub active: Vec<usize>,
    pub em: EmOptions,
    /// Resample when `N_eff < resample_fraction·P`.
    pub resample_fraction: f64,
    pub seed: u64,
    pub run: u64,
}

/// Particle filter with per-CPI EM for the reflection coefficients.
#[derive(Debug, Clone)]
pub struct ProposedDetector {
    opts: ProposedOptions,
    cloud: ParticleCloud,
    k: usize,
    pub last_em: Option<EmState>,
    posterior: (Vec<KinematicState>, Vec<f64>),
}

impl ProposedDetector {
    pub fn new(opts: ProposedOptions) -> Result<Self, DetectorError> {
        opts.cell.validate()?;
        let mut rng = substream(opts.seed, opts.run, 0, 0, Purpose::ParticleInit);
        let cloud = init_particles(&opts.cell, &mut rng);
        Ok(ProposedDetector { opts, cloud, k: 0, last_em: None, posterior: (Vec::new(), Vec::new()) })
    }

    pub fn cloud(&self) -> &ParticleCloud {
        &self.cloud
    }

    /// Weighted particles of the last update, before resampling.
    pub fn last_posterior(&self) -> (&[KinematicState], &[f64]) {
        (&self.posterior.0, &self.posterior.1)
    }

    /// Predict (after the first CPI), estimate `α̂_k` by EM on the predicted
    /// cloud, update the weights at `α̂_k` and return the weighted mean.
    pub fn process(&mut self, scene: &Scene, cubes: &[DataCube], dts: &[f64]) -> Result<CpiEstimate, DetectorError> {
        let (seed, run, k) = (self.opts.seed, self.opts.run, self.k as u64);
        self.last_em = None;
        if self.k > 0 {
            let mut rng = substream(seed, run, k, 0, Purpose::ParticlePredict);
            self.cloud.predict(&scene.cfg, &mut rng);
        }
        let conv = PhaseConvention::Referenced;
        let table = ProductTable::build(scene, cubes, &self.cloud.states, dts, &self.opts.active, conv);
        let supported: Vec<usize> = self
            .opts
            .active
            .iter()
            .copied()
            .filter(|&m| (0..table.num_particles).any(|p| table.get(p, m).gram > 0.0))
            .collect();
        if supported.len() < self.opts.active.len() {
            log::warn!("CPI {}: no particle inside the window on some channels", self.k + 1);
        }
        let (alpha, iters, converged) = if supported.is_empty() {
            (vec![C64::new(0.0, 0.0); scene.num_channels()], 0, true)
        } else {
            let em = run_em(&table, &self.cloud.weights, &supported, None, self.opts.em)?;
            let out = (em.alpha.clone(), em.iteration, em.converged);
            self.last_em = Some(em);
            out
        };
        self.cloud.update(&table.log_lrs(&alpha))?;
        let state = self.cloud.estimate_state();
        self.posterior = (self.cloud.states.clone(), self.cloud.weights.clone());
        let mut rng = substream(seed, run, k, 0, Purpose::Resample);
        let p = self.cloud.len() as f64;
        self.cloud.resample_if_needed(self.opts.resample_fraction * p, &mut rng);
        self.k += 1;
        Ok(CpiEstimate {
            state,
            alpha,
            sync: dts.to_vec(),
            convention: conv,
            em_iterations: iters,
            em_converged: converged,
        })
    }
}

/// Centre of the range/bearing cell of `x` with the velocity set to the
/// centre of its radial-velocity bin along the line of sight.
pub fn conventional_cell_state(cfg: &SceneConfig, cell: &CellUnderTest, x: &KinematicState) -> KinematicState {
    let c = cell.center();
    let dv = cfg.velocity_resolution();
    let vr = crate::model::geometry::radial_velocity(x, cfg.rx_pos);
    let v = ((vr / dv).floor() + 0.5) * dv;
    let (dx, dy) = (cfg.rx_pos[0] - c.x, cfg.rx_pos[1] - c.y);
    let r = dx.hypot(dy).max(f64::MIN_POSITIVE);
    KinematicState::new(c.x, c.y, v * dx / r, v * dy / r)
}

/// Fixed-cell coherent integrator with a closed-form `α̂` per channel.
#[derive(Debug, Clone)]
pub struct ConventionalDetector {
    pub state: KinematicState,
    pub active: Vec<usize>,
}

impl ConventionalDetector {
    pub fn new(cfg: &SceneConfig, cell: &CellUnderTest, x1: &KinematicState, active: Vec<usize>) -> Self {
        ConventionalDetector { state: conventional_cell_state(cfg, cell, x1), active }
    }

    pub fn process(&self, scene: &Scene, cubes: &[DataCube], dts: &[f64]) -> CpiEstimate {
        let conv = PhaseConvention::Referenced;
        let mut alpha = vec![C64::new(0.0, 0.0); scene.num_channels()];
        for &m in &self.active {
            let sig = ChannelSignal::or_empty(scene, &self.state, m, dts[m], conv);
            let p: WhitenedProducts = crate::likelihood::channel_products(scene, &cubes[m], &sig);
            alpha[m] = p.alpha_hat().unwrap_or_default();
        }
        CpiEstimate {
            state: self.state,
            alpha,
            sync: dts.to_vec(),
            convention: conv,
            em_iterations: 1,
            em_converged: true,
        }
    }
}
