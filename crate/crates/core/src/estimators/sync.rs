//! Maximum-likelihood estimation of a bi-static clock offset from the
//! direct transmitter-to-receiver signal.
//!
//! Every cube is reduced once to the beamformed scalars `d(r) = hᴴZ(r)`.
//! Only the running sums `D(r) = Σ_k d_k(r)`, the total power and the CPI
//! count are needed to evaluate the objective at any trial offset.

use serde::{Deserialize, Serialize};

use crate::model::{DataCube, Extent, Scene};
use crate::sim::DirectPath;
use crate::C64;

use super::EstimatorError;

/// Interval reduction ratio of the golden-section search.
pub const GOLDEN_RATIO: f64 = 0.618;

/// How the unknown carrier phase `exp(−jω_cΔt)` of the direct signal is
/// handled in the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncMode {
    /// Mean follows `exp(−jω_cΔt)` literally.
    Coherent,
    /// Objective maximised over a free common phase.
    #[default]
    PhaseMarginalized,
}

/// `d(r) = hᴴZ(r)` for every range bin.
pub fn beamform_direct(scene: &Scene, path: &DirectPath, cube: &DataCube) -> Vec<C64> {
    let h = path.beamformer(scene);
    (0..cube.num_bins()).map(|r| h.iter().zip(cube.column(r)).map(|(a, z)| a.conj() * z).sum()).collect()
}

/// Cached beamformer outputs of one bi-static channel.
#[derive(Debug, Clone)]
pub struct SyncHistory {
    pub path: DirectPath,
    /// Direct-path pulse energy `E_m`.
    pub energy: f64,
    sums: Vec<C64>,
    power: f64,
    count: usize,
    samples: Option<Vec<Vec<C64>>>,
}

impl SyncHistory {
    /// `keep_samples` retains every `d_k` for inspection.
    pub fn new(scene: &Scene, channel: usize, energy: f64, keep_samples: bool) -> Result<Self, EstimatorError> {
        let path = DirectPath::new(scene, channel)?;
        Ok(SyncHistory {
            path,
            energy,
            sums: vec![C64::new(0.0, 0.0); scene.cfg.num_range_bins],
            power: 0.0,
            count: 0,
            samples: keep_samples.then(Vec::new),
        })
    }

    pub fn channel(&self) -> usize {
        self.path.channel
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn samples(&self) -> Option<&[Vec<C64>]> {
        self.samples.as_deref()
    }

    pub fn push(&mut self, scene: &Scene, cube: &DataCube) {
        self.push_beamformed(beamform_direct(scene, &self.path, cube));
    }

    pub fn push_beamformed(&mut self, d: Vec<C64>) {
        for (s, v) in self.sums.iter_mut().zip(&d) {
            *s += v;
            self.power += v.norm_sqr();
        }
        self.count += 1;
        if let Some(all) = self.samples.as_mut() {
            all.push(d);
        }
    }

    /// Output noise variance `σ²_d = hᴴΣh`.
    pub fn noise_variance(&self, scene: &Scene) -> f64 {
        scene.whitener(self.channel()).variance_along(&self.path.beamformer(scene)).unwrap_or(f64::NAN)
    }

    /// Real amplitude `√E·LN·Λ(r − d)` on the direct extent for offset `dt`.
    pub fn mean_profile(&self, scene: &Scene, dt: f64) -> (Extent, [C64; 2]) {
        let d = self.path.delay_bins(scene, dt);
        let ext = Extent::from_delay(d, scene.cfg.num_range_bins);
        let g = self.energy.sqrt() * scene.cfg.column_len() as f64;
        let mut a = [C64::new(0.0, 0.0); 2];
        for (i, r) in ext.iter().enumerate() {
            a[i] = scene.waveform.eval_lag(r as f64 - d) * g;
        }
        (ext, a)
    }
}

/// `J_k(Δt)`: negative squared residual of the accumulated beamformer
/// outputs against the direct-path mean, summed over all bins and CPIs.
pub fn sync_objective(scene: &Scene, hist: &SyncHistory, dt: f64, mode: SyncMode) -> f64 {
    let (ext, a) = hist.mean_profile(scene, dt);
    let k = hist.count as f64;
    let mut corr = C64::new(0.0, 0.0);
    let mut energy = 0.0;
    for (i, r) in ext.iter().enumerate() {
        corr += a[i].conj() * hist.sums[r];
        energy += a[i].norm_sqr();
    }
    let cross = match mode {
        SyncMode::Coherent => {
            let s = C64::from_polar(1.0, -scene.cfg.omega_c() * dt);
            (s.conj() * corr).re
        }
        SyncMode::PhaseMarginalized => corr.norm(),
    };
    -(hist.power - 2.0 * cross + k * energy)
}

/// Argmax of `J` over `Δt ∈ {0, T_p, …, (Γ−1)T_p}` and the interval
/// `[Δt̂₀ − T_p, Δt̂₀ + T_p]`.
pub fn coarse_sync_init(scene: &Scene, hist: &SyncHistory, mode: SyncMode) -> Result<(f64, [f64; 2]), EstimatorError> {
    if hist.count == 0 {
        return Err(EstimatorError::EmptyHistory);
    }
    let tp = scene.cfg.pulse_dur_s;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for r in 0..scene.cfg.num_range_bins {
        let dt = r as f64 * tp;
        let j = sync_objective(scene, hist, dt, mode);
        if j > best.0 {
            best = (j, dt);
        }
    }
    Ok((best.1, [best.1 - tp, best.1 + tp]))
}

/// Result of a golden-section search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncEstimate {
    pub dt: f64,
    pub objective: f64,
    /// Number of iterations `ν`; `widths[ν − 1]` is the final width.
    pub iterations: usize,
    pub widths: Vec<f64>,
    pub evaluations: usize,
}

/// `w₀·0.618^(ν−1)`.
pub fn golden_width(initial: f64, iterations: usize) -> f64 {
    initial * GOLDEN_RATIO.powi(iterations as i32 - 1)
}

/// Golden-section maximisation of `f` on `[lo, hi]` until the interval is no
/// wider than `eps`.
///
/// Both interior points are placed from the current interval on every
/// iteration, so each iteration shrinks the interval by exactly
/// [`GOLDEN_RATIO`].
pub fn golden_section_max<F: FnMut(f64) -> f64>(
    lo: f64,
    hi: f64,
    eps: f64,
    mut f: F,
) -> Result<SyncEstimate, EstimatorError> {
    if !(lo <= hi) {
        return Err(EstimatorError::InvertedInterval { lo, hi });
    }
    let a = GOLDEN_RATIO;
    let (mut t1, mut t2) = (lo, hi);
    let mut p1 = t1 + (1.0 - a) * (t2 - t1);
    let mut p2 = t1 + a * (t2 - t1);
    let mut j1 = f(p1);
    let mut j2 = f(p2);
    let mut evaluations = 2;
    let mut widths = vec![t2 - t1];
    while (t2 - t1).abs() > eps {
        if j1 > j2 {
            t2 = p2;
        } else {
            t1 = p1;
        }
        p1 = t1 + (1.0 - a) * (t2 - t1);
        p2 = t1 + a * (t2 - t1);
        j1 = f(p1);
        j2 = f(p2);
        evaluations += 2;
        widths.push(t2 - t1);
    }
    let (dt, objective) = if j1 > j2 { (t1, j1) } else { (t2, j2) };
    Ok(SyncEstimate { dt, objective, iterations: widths.len(), widths, evaluations })
}

/// Golden-section search of `J` on `interval` with termination width `eps`.
pub fn golden_section_sync(
    scene: &Scene,
    hist: &SyncHistory,
    interval: [f64; 2],
    eps: f64,
    mode: SyncMode,
) -> Result<SyncEstimate, EstimatorError> {
    if hist.count == 0 {
        return Err(EstimatorError::EmptyHistory);
    }
    golden_section_max(interval[0], interval[1], eps, |dt| sync_objective(scene, hist, dt, mode))
}

/// Coarse grid followed by golden-section refinement with `ε = T_p/100`.
pub fn estimate_sync(scene: &Scene, hist: &SyncHistory, mode: SyncMode) -> Result<SyncEstimate, EstimatorError> {
    let (_, interval) = coarse_sync_init(scene, hist, mode)?;
    golden_section_sync(scene, hist, interval, scene.cfg.pulse_dur_s / 100.0, mode)
}
