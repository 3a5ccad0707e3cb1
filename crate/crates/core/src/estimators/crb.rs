//! Cramér-Rao bound for one channel's reflection coefficient.

use serde::{Deserialize, Serialize};

use crate::model::{ChannelSignal, KinematicState, PhaseConvention, Scene};

use super::EstimatorError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrbResult {
    /// `I(α) = Σ_r 2·sᴴΣ⁻¹s`, identical for the real and imaginary parts.
    pub fisher: f64,
    /// `1 / I(α)` per real coordinate.
    pub variance_bound: f64,
}

impl CrbResult {
    pub fn from_gram(gram: f64) -> Self {
        let fisher = 2.0 * gram;
        CrbResult { fisher, variance_bound: 1.0 / fisher }
    }

    /// Bound on `E|α̂ − α|²`, the sum over both coordinates.
    pub fn complex_variance_bound(&self) -> f64 {
        2.0 * self.variance_bound
    }
}

pub fn crb_alpha(scene: &Scene, state: &KinematicState, m: usize, dt: f64) -> Result<CrbResult, EstimatorError> {
    let sig = ChannelSignal::new(scene, state, m, dt, PhaseConvention::Carrier)?;
    let w = scene.whitener(m);
    let mut gram = 0.0;
    for r in sig.extent.iter() {
        gram += w.quad_form(&sig.stacked(r))?;
    }
    Ok(CrbResult::from_gram(gram))
}
