//! Particle EM for the per-channel reflection coefficients.
//!
//! All particle/channel inner products are precomputed in a
//! [`ProductTable`]; each EM iteration is then `O(P·M)`.

use crate::likelihood::{normalize_log_weights, ProductTable};
use crate::C64;

use super::EstimatorError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    /// Convergence when `‖α⁽ⁱ⁾ − α⁽ⁱ⁻¹⁾‖ < tol_rel·(1 + ‖α⁽ⁱ⁾‖)`.
    pub tol_rel: f64,
    pub max_iters: usize,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions { tol_rel: 1e-3, max_iters: 50 }
    }
}

/// One EM iterate for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct EmIterate {
    pub alpha: Vec<C64>,
    pub step_norm: f64,
    pub q_hat: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmState {
    pub alpha: Vec<C64>,
    pub iteration: usize,
    pub converged: bool,
    pub xi: Vec<f64>,
    pub trace: Vec<EmIterate>,
}

/// `ξ_p ∝ ζ_p·exp(LLR_p(α))`, normalised.
pub fn em_e_step(table: &ProductTable, prior: &[f64], alpha: &[C64]) -> Result<Vec<f64>, EstimatorError> {
    let mut lw: Vec<f64> = prior
        .iter()
        .enumerate()
        .map(|(p, z)| if *z > 0.0 { z.ln() + table.log_lr(p, alpha) } else { f64::NEG_INFINITY })
        .collect();
    normalize_log_weights(&mut lw).ok_or(EstimatorError::DegenerateEStep)?;
    Ok(lw)
}

/// `α̂_m = Σ_p ξ_p C_pm / Σ_p ξ_p G_pm` for the listed channels; others are 0.
pub fn em_m_step(table: &ProductTable, xi: &[f64], active: &[usize]) -> Result<Vec<C64>, EstimatorError> {
    let mut alpha = vec![C64::new(0.0, 0.0); table.num_channels];
    for &m in active {
        let mut num = C64::new(0.0, 0.0);
        let mut den = 0.0;
        for (p, w) in xi.iter().enumerate() {
            let e = table.get(p, m);
            num += e.cross * *w;
            den += e.gram * *w;
        }
        if !(den > 0.0) {
            return Err(EstimatorError::ZeroDenominator { channel: m });
        }
        alpha[m] = num / den;
    }
    Ok(alpha)
}

/// `Q̂(α) = Σ_p ξ_p·LLR_p(α)`, the α-dependent part of the Monte Carlo
/// EM objective.
pub fn q_hat(table: &ProductTable, xi: &[f64], alpha: &[C64]) -> f64 {
    xi.iter().enumerate().map(|(p, w)| w * table.log_lr(p, alpha)).sum()
}

/// `log Σ_p ζ_p·exp(LLR_p(α))`, the marginal log-likelihood ratio EM ascends.
pub fn marginal_log_lr(table: &ProductTable, prior: &[f64], alpha: &[C64]) -> f64 {
    let lw: Vec<f64> =
        prior.iter().enumerate().filter(|(_, z)| **z > 0.0).map(|(p, z)| z.ln() + table.log_lr(p, alpha)).collect();
    let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + lw.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn dist(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Alternate E and M steps from `alpha0` (or one M-step with `ξ = ζ` when
/// `None`).
pub fn run_em(
    table: &ProductTable,
    prior: &[f64],
    active: &[usize],
    alpha0: Option<Vec<C64>>,
    opts: EmOptions,
) -> Result<EmState, EstimatorError> {
    let mut prev = match alpha0 {
        Some(a) => a,
        None => em_m_step(table, prior, active)?,
    };
    let mut trace =
        vec![EmIterate { alpha: prev.clone(), step_norm: f64::INFINITY, q_hat: q_hat(table, prior, &prev) }];
    let mut xi = prior.to_vec();
    for i in 1..=opts.max_iters {
        xi = em_e_step(table, prior, &prev)?;
        let next = em_m_step(table, &xi, active)?;
        let step = dist(&next, &prev);
        trace.push(EmIterate { alpha: next.clone(), step_norm: step, q_hat: q_hat(table, &xi, &next) });
        let converged = step < opts.tol_rel * (1.0 + norm(&next));
        prev = next;
        if converged {
            return Ok(EmState { alpha: prev, iteration: i, converged: true, xi, trace });
        }
    }
    Ok(EmState { alpha: prev, iteration: opts.max_iters, converged: false, xi, trace })
}
