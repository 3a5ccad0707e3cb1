use std::f64::consts::PI;

use crate::C64;

/// Half-wavelength ULA response: element `l` is `exp(−j·l·π·sin θ)`.
pub fn spatial_steering(theta: f64, num_elements: usize) -> Vec<C64> {
    let step = -PI * theta.sin();
    (0..num_elements).map(|l| C64::from_polar(1.0, l as f64 * step)).collect()
}

/// Slow-time response: element `n` is `exp(−j·ω_c·τ)·exp(j·n·Ω)`.
pub fn temporal_steering(tau: f64, omega: f64, num_pulses: usize, omega_c: f64) -> Vec<C64> {
    let base = -omega_c * tau;
    (0..num_pulses).map(|n| C64::from_polar(1.0, base + n as f64 * omega)).collect()
}

/// Kronecker product `a ⊗ b` with index `i·len(b) + j`.
pub fn kron(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        out.extend(b.iter().map(|&y| x * y));
    }
    out
}

/// Spatial, temporal and stacked steering vectors of one channel and bin.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVectors {
    pub spatial: Vec<C64>,
    pub temporal: Vec<C64>,
    pub stacked: Vec<C64>,
}
