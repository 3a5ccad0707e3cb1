//! Whitened inner products and log-likelihood ratios.
//!
//! For a column `Z(r)` and signal `s(r)` the instantaneous log-likelihood
//! ratio of `CN(αs, Σ)` against `CN(0, Σ)` is
//! `2·Re{α*·sᴴΣ⁻¹Z} − |α|²·sᴴΣ⁻¹s`. Summing the two quadratic forms over the
//! range extent first gives per-channel sufficient statistics `(C, G)` that
//! do not depend on `α`.

use rayon::prelude::*;

use crate::model::{ChannelSignal, DataCube, KinematicState, ModelError, PhaseConvention, Scene};
use crate::C64;

/// `cross = sᴴΣ⁻¹Z`, `gram = sᴴΣ⁻¹s`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WhitenedProducts {
    pub cross: C64,
    pub gram: f64,
}

impl std::ops::Add for WhitenedProducts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        WhitenedProducts { cross: self.cross + o.cross, gram: self.gram + o.gram }
    }
}

impl std::ops::AddAssign for WhitenedProducts {
    fn add_assign(&mut self, o: Self) {
        self.cross += o.cross;
        self.gram += o.gram;
    }
}

impl WhitenedProducts {
    /// Maximiser of the log-likelihood ratio over `α`.
    pub fn alpha_hat(&self) -> Option<C64> {
        (self.gram > 0.0).then(|| self.cross / self.gram)
    }
}

pub fn whitened_products(z: &[C64], s: &[C64], w: &crate::model::Whitener) -> Result<WhitenedProducts, ModelError> {
    let (cross, gram) = w.products(z, s)?;
    Ok(WhitenedProducts { cross, gram })
}

pub fn instantaneous_log_lr(p: &WhitenedProducts, alpha: C64) -> f64 {
    2.0 * (alpha.conj() * p.cross).re - alpha.norm_sqr() * p.gram
}

/// Products of one bin.
pub fn bin_products(scene: &Scene, cube: &DataCube, sig: &ChannelSignal, r: usize) -> WhitenedProducts {
    let amp = sig.amplitude(r);
    if amp == C64::new(0.0, 0.0) {
        return WhitenedProducts::default();
    }
    let w = scene.whitener(sig.channel);
    match w.white_variance() {
        Some(v) => WhitenedProducts {
            cross: amp.conj() * sig.beam(cube.column(r)) / v,
            gram: amp.norm_sqr() * scene.cfg.column_len() as f64 / v,
        },
        None => whitened_products(cube.column(r), &sig.stacked(r), w).unwrap_or_default(),
    }
}

/// Products summed over the extent of `sig`.
pub fn channel_products(scene: &Scene, cube: &DataCube, sig: &ChannelSignal) -> WhitenedProducts {
    sig.extent.iter().map(|r| bin_products(scene, cube, sig, r)).fold(WhitenedProducts::default(), |a, b| a + b)
}

/// Per-CPI log-likelihood ratio with per-channel contributions.
#[derive(Debug, Clone, PartialEq)]
pub struct CpiLogLr {
    pub total: f64,
    pub per_channel: Vec<f64>,
    /// Every channel extent was empty (object outside the window).
    pub outside_window: bool,
}

/// Sum of instantaneous log-likelihood ratios over channels and extents.
pub fn cpi_log_lr(
    scene: &Scene,
    cubes: &[DataCube],
    state: &KinematicState,
    alphas: &[C64],
    dts: &[f64],
    conv: PhaseConvention,
) -> CpiLogLr {
    let mut per_channel = vec![0.0; cubes.len()];
    let mut any = false;
    for (m, cube) in cubes.iter().enumerate() {
        let sig = ChannelSignal::or_empty(scene, state, cube.channel, dts[cube.channel], conv);
        if sig.extent.is_empty() {
            continue;
        }
        any = true;
        per_channel[m] = instantaneous_log_lr(&channel_products(scene, cube, &sig), alphas[cube.channel]);
    }
    if !any {
        log::warn!("all channel extents empty at ({:.1}, {:.1}); contribution is zero", state.x, state.y);
    }
    CpiLogLr { total: per_channel.iter().sum(), per_channel, outside_window: !any }
}

/// `log CN(Z; α·s_m(r, X), Σ_m)`.
#[allow(clippy::too_many_arguments)]
pub fn channel_likelihood(
    z: &[C64],
    state: &KinematicState,
    alpha: C64,
    dt: f64,
    scene: &Scene,
    m: usize,
    r: usize,
    conv: PhaseConvention,
) -> Result<f64, ModelError> {
    let sig = ChannelSignal::lenient(scene, state, m, dt, conv)?;
    let w = scene.whitener(m);
    let resid: Vec<C64> = if sig.extent.contains(r) {
        z.iter().zip(sig.stacked(r)).map(|(a, s)| a - alpha * s).collect()
    } else {
        z.to_vec()
    };
    let dim = w.dim() as f64;
    Ok(-dim * std::f64::consts::PI.ln() - w.log_det() - w.quad_form(&resid)?)
}

/// `(C, G)` per particle and channel, summed over each particle's extent.
///
/// Row-major: entry `p·M + m`. Channels not listed in `active` hold zeros.
#[derive(Debug, Clone)]
pub struct ProductTable {
    pub num_particles: usize,
    pub num_channels: usize,
    pub entries: Vec<WhitenedProducts>,
}

impl ProductTable {
    pub fn build(
        scene: &Scene,
        cubes: &[DataCube],
        states: &[KinematicState],
        dts: &[f64],
        active: &[usize],
        conv: PhaseConvention,
    ) -> Self {
        let m_all = scene.num_channels();
        let entries: Vec<WhitenedProducts> = states
            .par_iter()
            .flat_map_iter(|x| {
                let mut row = vec![WhitenedProducts::default(); m_all];
                for &m in active {
                    let sig = ChannelSignal::or_empty(scene, x, m, dts[m], conv);
                    row[m] = channel_products(scene, &cubes[m], &sig);
                }
                row
            })
            .collect();
        ProductTable { num_particles: states.len(), num_channels: m_all, entries }
    }

    pub fn get(&self, p: usize, m: usize) -> WhitenedProducts {
        self.entries[p * self.num_channels + m]
    }

    /// `Σ_m 2·Re{α_m* C_pm} − |α_m|² G_pm`.
    pub fn log_lr(&self, p: usize, alphas: &[C64]) -> f64 {
        let row = &self.entries[p * self.num_channels..(p + 1) * self.num_channels];
        row.iter().zip(alphas).map(|(e, a)| instantaneous_log_lr(e, *a)).sum()
    }

    pub fn log_lrs(&self, alphas: &[C64]) -> Vec<f64> {
        (0..self.num_particles).map(|p| self.log_lr(p, alphas)).collect()
    }
}

/// Normalise log-weights in place to linear weights summing to one.
/// Returns `log Σ exp(logw)` or `None` when every entry is `-∞`/NaN.
pub fn normalize_log_weights(logw: &mut [f64]) -> Option<f64> {
    let max = logw.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let mut sum = 0.0;
    for v in logw.iter_mut() {
        *v = if v.is_finite() { (*v - max).exp() } else { 0.0 };
        sum += *v;
    }
    for v in logw.iter_mut() {
        *v /= sum;
    }
    Some(max + sum.ln())
}
