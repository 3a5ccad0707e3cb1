//! Clairvoyant CFAR threshold and SNR bookkeeping.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::model::{ChannelSignal, PhaseConvention, Scene};
use crate::sim::{linear_to_db, reflectivity_variance, signal_energy, GroundTruth};

use super::DetectorError;

/// Inverse upper-tail standard-normal probability, `Q⁻¹(p)`.
pub fn q_inv(p: f64) -> Result<f64, DetectorError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(DetectorError::InvalidPfa(p));
    }
    let n = Normal::standard();
    Ok(-n.inverse_cdf(p))
}

/// Threshold parameters after `K` CPIs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfarParams {
    pub pfa: f64,
    pub mu_k: f64,
    pub sigma_k: f64,
}

impl CfarParams {
    /// `log 𝒯_K = Q⁻¹(P_fa)·σ_K + μ_K`.
    pub fn threshold_log(&self) -> Result<f64, DetectorError> {
        Ok(q_inv(self.pfa)? * self.sigma_k + self.mu_k)
    }
}

/// Cumulative null moments `μ_k`, `σ²_k` of the known-signal statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfarSchedule {
    pub mu: Vec<f64>,
    pub var: Vec<f64>,
}

impl CfarSchedule {
    /// Moments from the true trajectory, reflectivities and offsets over the
    /// listed channels.
    pub fn from_truth(scene: &Scene, truth: &GroundTruth, channels: &[usize], num_cpis: usize) -> Self {
        let mut mu = Vec::with_capacity(num_cpis);
        let mut var = Vec::with_capacity(num_cpis);
        let (mut m_acc, mut v_acc) = (0.0, 0.0);
        for k in 0..num_cpis {
            for &m in channels {
                let sig = ChannelSignal::or_empty(
                    scene,
                    &truth.trajectory[k],
                    m,
                    truth.sync_offsets[m],
                    PhaseConvention::Carrier,
                );
                let g = truth.reflectivities[m][k].norm_sqr() * signal_energy(scene, &sig);
                m_acc -= g;
                v_acc += 2.0 * g;
            }
            mu.push(m_acc);
            var.push(v_acc);
        }
        CfarSchedule { mu, var }
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    /// Parameters after `k` CPIs (one-based).
    pub fn params(&self, pfa: f64, k: usize) -> CfarParams {
        CfarParams { pfa, mu_k: self.mu[k - 1], sigma_k: self.var[k - 1].sqrt() }
    }

    /// `log 𝒯_k` for `k = 1..K`.
    pub fn thresholds(&self, pfa: f64) -> Result<Vec<f64>, DetectorError> {
        let q = q_inv(pfa)?;
        Ok(self.mu.iter().zip(&self.var).map(|(m, v)| q * v.sqrt() + m).collect())
    }
}

/// `log 𝒯_k` for `k = 1..K` from the true signals on every channel.
pub fn cfar_threshold(
    scene: &Scene,
    truth: &GroundTruth,
    pfa: f64,
    num_cpis: usize,
) -> Result<Vec<f64>, DetectorError> {
    let channels: Vec<usize> = (0..scene.num_channels()).collect();
    CfarSchedule::from_truth(scene, truth, &channels, num_cpis).thresholds(pfa)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrAccounting {
    /// `SNR_{m,k}` linear, indexed `[m][k]`.
    pub per_channel: Vec<Vec<f64>>,
    /// Running sum over channels and CPIs, linear.
    pub cumulative: Vec<f64>,
    pub cumulative_db: Vec<f64>,
}

/// Expected per-CPI SNR `E|α|²·Σ_r sᴴΣ⁻¹s` of every channel and its running
/// total.
pub fn snr_accounting(scene: &Scene, truth: &GroundTruth, num_cpis: usize) -> Result<SnrAccounting, DetectorError> {
    let mut per_channel = vec![Vec::with_capacity(num_cpis); scene.num_channels()];
    let mut cumulative = Vec::with_capacity(num_cpis);
    let mut acc = 0.0;
    for k in 0..num_cpis {
        let x = &truth.trajectory[k];
        for (m, row) in per_channel.iter_mut().enumerate() {
            let dt = truth.sync_offsets[m];
            let sig = ChannelSignal::new(scene, x, m, dt, PhaseConvention::Carrier)?;
            let snr = reflectivity_variance(scene.cfg.snr_db, x, scene, m, dt)? * signal_energy(scene, &sig);
            acc += snr;
            row.push(snr);
        }
        cumulative.push(acc);
    }
    let cumulative_db = cumulative.iter().map(|v| linear_to_db(*v)).collect();
    Ok(SnrAccounting { per_channel, cumulative, cumulative_db })
}
