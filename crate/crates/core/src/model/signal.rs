use crate::C64;

use super::geometry::{bearing_to, doppler_from_bearings};
use super::steering::{kron, spatial_steering, temporal_steering};
use super::{KinematicState, ModelError, Scene, SteeringVectors};

const SNAP_TOL: f64 = 1e-9;

/// How the constant carrier phase of a reflection is carried.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaseConvention {
    /// Keep `exp(−jω_c(τ + Δt))` in the signal vector, as in the literal model.
    #[default]
    Carrier,
    /// Fold the carrier phase into the reflection coefficient. The vector
    /// then starts at `Λ` on element 0, pulse 0.
    Referenced,
}

/// Range bins in which a reflector deposits energy: empty, one bin, or two
/// adjacent bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Extent {
    first: usize,
    len: usize,
}

impl Extent {
    pub const EMPTY: Extent = Extent { first: 0, len: 0 };

    /// Bins with `|r − d| < 1` inside `[0, num_bins)` for a delay of `d` bins.
    pub fn from_delay(d: f64, num_bins: usize) -> Extent {
        if !(d >= 0.0 && d < num_bins as f64) {
            return Extent::EMPTY;
        }
        let first = d.floor() as usize;
        let len = if d == first as f64 || first + 1 >= num_bins { 1 } else { 2 };
        Extent { first, len }
    }

    pub fn len(&self) -> usize {
        self.len
    }
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
    pub fn first(&self) -> usize {
        self.first
    }
    pub fn contains(&self, r: usize) -> bool {
        r >= self.first && r < self.first + self.len
    }
    pub fn iter(&self) -> std::ops::Range<usize> {
        self.first..self.first + self.len
    }
    pub fn to_vec(&self) -> Vec<usize> {
        self.iter().collect()
    }
}

pub(crate) fn snap(d: f64) -> f64 {
    let r = d.round();
    if (d - r).abs() < SNAP_TOL {
        r
    } else {
        d
    }
}

/// `(τ_m + Δt_m) / T_p`, snapped to an integer when within `1e-9` of one.
pub fn delay_in_bins(state: &KinematicState, scene: &Scene, m: usize, dt: f64) -> Result<f64, ModelError> {
    let tau = super::time_of_flight(state, &scene.cfg, m)?;
    Ok(snap((tau + dt) / scene.cfg.pulse_dur_s))
}

/// Range extent of a reflection in channel `m` with synchronisation offset
/// `dt`. A delay outside `[0, T)` is a range ambiguity.
pub fn range_extent(state: &KinematicState, scene: &Scene, m: usize, dt: f64) -> Result<Extent, ModelError> {
    let d = delay_in_bins(state, scene, m, dt)?;
    let g = scene.cfg.num_range_bins;
    if !(d >= 0.0 && d < g as f64) {
        return Err(ModelError::RangeAmbiguity {
            channel: m,
            delay_s: d * scene.cfg.pulse_dur_s,
            pri_s: scene.cfg.pri_s,
        });
    }
    Ok(Extent::from_delay(d, g))
}

/// Spatial, temporal and stacked steering vectors of bin `r`, evaluated
/// term by term from the literal model.
pub fn steering_vectors(
    r: usize,
    state: &KinematicState,
    scene: &Scene,
    m: usize,
    dt: f64,
) -> Result<SteeringVectors, ModelError> {
    let cfg = &scene.cfg;
    let (th, th_m) = super::bearings(state, cfg, m)?;
    let tau = super::time_of_flight(state, cfg, m)?;
    let omega = doppler_from_bearings(state, cfg, th, th_m);
    let spatial = spatial_steering(th, cfg.num_elements);
    let temporal = temporal_steering(tau, omega, cfg.num_pulses, cfg.omega_c());
    let d = delay_in_bins(state, scene, m, dt)?;
    let lam = scene.waveform.eval_lag(r as f64 - d);
    let scale = C64::from_polar(1.0, -cfg.omega_c() * dt) * lam;
    let stacked = kron(&spatial, &temporal).into_iter().map(|v| v * scale).collect();
    Ok(SteeringVectors { spatial, temporal, stacked })
}

/// `s_m(r, X) = s(Δt)·(s_s(θ) ⊗ s_t(τ, Ω))·Λ(rT_p − τ − Δt)`.
pub fn signal_model(
    r: usize,
    state: &KinematicState,
    scene: &Scene,
    m: usize,
    dt: f64,
) -> Result<Vec<C64>, ModelError> {
    Ok(steering_vectors(r, state, scene, m, dt)?.stacked)
}

/// Factored signal of one channel: `s(r) = amp(r)·(spatial ⊗ doppler)` for
/// `r` in the extent, zero elsewhere.
#[derive(Debug, Clone)]
pub struct ChannelSignal {
    pub channel: usize,
    pub spatial: Vec<C64>,
    /// `exp(j·n·Ω)`, without the carrier term.
    pub doppler: Vec<C64>,
    pub phase: C64,
    pub extent: Extent,
    lambda: [C64; 2],
    pub delay_bins: f64,
}

impl ChannelSignal {
    /// Strict constructor: range ambiguity and undefined bearings are errors.
    pub fn new(
        scene: &Scene,
        state: &KinematicState,
        m: usize,
        dt: f64,
        conv: PhaseConvention,
    ) -> Result<Self, ModelError> {
        let sig = Self::lenient(scene, state, m, dt, conv)?;
        if sig.extent.is_empty() {
            range_extent(state, scene, m, dt)?;
        }
        Ok(sig)
    }

    /// Hot-path constructor: an out-of-window delay yields an empty extent.
    pub fn lenient(
        scene: &Scene,
        state: &KinematicState,
        m: usize,
        dt: f64,
        conv: PhaseConvention,
    ) -> Result<Self, ModelError> {
        let cfg = &scene.cfg;
        let r = super::ranges(state, cfg, m)?;
        let th = bearing_to(state, cfg.rx_pos)?;
        let th_m = if cfg.tx(m) == cfg.rx_pos { th } else { bearing_to(state, cfg.tx(m))? };
        let omega = doppler_from_bearings(state, cfg, th, th_m);
        let tau = r.total / cfg.speed_of_light;
        let d = snap((tau + dt) / cfg.pulse_dur_s);
        let extent = Extent::from_delay(d, cfg.num_range_bins);
        let phase = match conv {
            PhaseConvention::Carrier => C64::from_polar(1.0, -cfg.omega_c() * (tau + dt)),
            PhaseConvention::Referenced => C64::new(1.0, 0.0),
        };
        let mut lambda = [C64::new(0.0, 0.0); 2];
        for (i, rb) in extent.iter().enumerate() {
            lambda[i] = scene.waveform.eval_lag(rb as f64 - d);
        }
        Ok(ChannelSignal {
            channel: m,
            spatial: spatial_steering(th, cfg.num_elements),
            doppler: temporal_steering(0.0, omega, cfg.num_pulses, 0.0),
            phase,
            extent,
            lambda,
            delay_bins: d,
        })
    }

    /// Same as [`lenient`](Self::lenient) but maps geometry errors to an
    /// empty signal.
    pub fn or_empty(scene: &Scene, state: &KinematicState, m: usize, dt: f64, conv: PhaseConvention) -> Self {
        Self::lenient(scene, state, m, dt, conv).unwrap_or_else(|_| ChannelSignal {
            channel: m,
            spatial: vec![C64::new(0.0, 0.0); scene.cfg.num_elements],
            doppler: vec![C64::new(0.0, 0.0); scene.cfg.num_pulses],
            phase: C64::new(0.0, 0.0),
            extent: Extent::EMPTY,
            lambda: [C64::new(0.0, 0.0); 2],
            delay_bins: f64::NAN,
        })
    }

    /// Scalar factor of bin `r`: `phase·Λ(r − d)`; zero outside the extent.
    pub fn amplitude(&self, r: usize) -> C64 {
        if self.extent.contains(r) {
            self.phase * self.lambda[r - self.extent.first()]
        } else {
            C64::new(0.0, 0.0)
        }
    }

    /// `Σ_{r∈𝓔} |Λ(r − d)|²`.
    pub fn lambda_energy(&self) -> f64 {
        self.extent.iter().map(|r| self.lambda[r - self.extent.first()].norm_sqr()).sum()
    }

    /// Full stacked vector of bin `r`.
    pub fn stacked(&self, r: usize) -> Vec<C64> {
        let a = self.amplitude(r);
        let mut out = Vec::with_capacity(self.spatial.len() * self.doppler.len());
        for &s in &self.spatial {
            let sa = s * a;
            out.extend(self.doppler.iter().map(|&t| sa * t));
        }
        out
    }

    /// Adds `coef·s(r)` to `col`.
    pub fn add_to(&self, r: usize, coef: C64, col: &mut [C64]) {
        let a = self.amplitude(r) * coef;
        if a == C64::new(0.0, 0.0) {
            return;
        }
        let n = self.doppler.len();
        for (l, &s) in self.spatial.iter().enumerate() {
            let sa = s * a;
            for (v, &t) in col[l * n..(l + 1) * n].iter_mut().zip(&self.doppler) {
                *v += sa * t;
            }
        }
    }

    /// Unscaled beam `Σ_l conj(spatial_l) Σ_n conj(doppler_n) z[l·N + n]`.
    pub fn beam(&self, z: &[C64]) -> C64 {
        let n = self.doppler.len();
        let mut acc = C64::new(0.0, 0.0);
        for (l, s) in self.spatial.iter().enumerate() {
            let row = &z[l * n..(l + 1) * n];
            let mut inner = C64::new(0.0, 0.0);
            for (t, v) in self.doppler.iter().zip(row) {
                // conj(t)·v
                inner += C64::new(t.re * v.re + t.im * v.im, t.re * v.im - t.im * v.re);
            }
            acc += s.conj() * inner;
        }
        acc
    }
}
