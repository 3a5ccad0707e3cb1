//! Ground truth and data-cube synthesis.

use nalgebra::{Matrix4, Vector4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::noise::standard_cn;
use crate::model::{ChannelSignal, DataCube, Extent, KinematicState, ModelError, PhaseConvention, Scene, SceneConfig};
use crate::rng::{substream, Purpose};
use crate::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("channel {channel}: empty range extent, reflection SNR undefined")]
    EmptyExtent { channel: usize },
    #[error("channel 0 is mono-static and has no separate direct path")]
    MonostaticDirectPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    H0,
    H1,
}

/// Everything the simulator knows about one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// `X_1 … X_K`.
    pub trajectory: Vec<KinematicState>,
    /// `α[m][k]`, drawn under both hypotheses; injected only under H1.
    pub reflectivities: Vec<Vec<C64>>,
    pub sync_offsets: Vec<f64>,
    /// Direct-path pulse energy `E_m`; zero for channel 0.
    pub direct_energy: Vec<f64>,
    pub hypothesis: Hypothesis,
    pub seed: u64,
    pub run: u64,
}

impl GroundTruth {
    pub fn num_cpis(&self) -> usize {
        self.trajectory.len()
    }
    pub fn alpha(&self, k: usize) -> Vec<C64> {
        self.reflectivities.iter().map(|row| row[k]).collect()
    }
}

/// Synthesis switches for oracle tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    pub noise_free: bool,
    pub direct_path: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { noise_free: false, direct_path: true }
    }
}

/// Constant-velocity transition `F`.
pub fn transition_matrix(delta: f64) -> Matrix4<f64> {
    Matrix4::new(
        1.0, 0.0, delta, 0.0, //
        0.0, 1.0, 0.0, delta, //
        0.0, 0.0, 1.0, 0.0, //
        0.0, 0.0, 0.0, 1.0,
    )
}

/// Process-noise covariance `Q` in `[x, y, ẋ, ẏ]` order.
pub fn process_noise_cov(delta: f64, var: f64) -> Matrix4<f64> {
    let a = delta.powi(3) / 3.0;
    let b = delta.powi(2) / 2.0;
    Matrix4::new(
        a, 0.0, b, 0.0, //
        0.0, a, 0.0, b, //
        b, 0.0, delta, 0.0, //
        0.0, b, 0.0, delta,
    ) * var
}

/// One Markov step `F·X + w`, `w ~ N(0, Q)`.
pub fn propagate<R: Rng + ?Sized>(x: &KinematicState, delta: f64, var: f64, rng: &mut R) -> KinematicState {
    let mut next = KinematicState::new(x.x + delta * x.vx, x.y + delta * x.vy, x.vx, x.vy);
    if var > 0.0 {
        // Per-axis Cholesky of [[Δ³/3, Δ²/2], [Δ²/2, Δ]].
        let c11 = (delta.powi(3) / 3.0).sqrt();
        let c21 = delta.powi(2) / 2.0 / c11;
        let c22 = (delta - c21 * c21).sqrt();
        let sd = var.sqrt();
        for (pos, vel) in [(0, 2), (1, 3)] {
            let g1: f64 = rng.sample(StandardNormal);
            let g2: f64 = rng.sample(StandardNormal);
            let mut a = next.to_array();
            a[pos] += sd * c11 * g1;
            a[vel] += sd * (c21 * g1 + c22 * g2);
            next = KinematicState::from_array(a);
        }
    }
    next
}

/// `X_1 … X_K` starting one step after `x0`.
pub fn sample_trajectory<R: Rng + ?Sized>(
    x0: &KinematicState,
    k: usize,
    cfg: &SceneConfig,
    rng: &mut R,
) -> Vec<KinematicState> {
    let mut out = Vec::with_capacity(k);
    let mut x = *x0;
    for _ in 0..k {
        x = propagate(&x, cfg.illum_period_s, cfg.process_noise_var, rng);
        out.push(x);
    }
    out
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// `Σ_{r∈𝓔} sᴴ Σ⁻¹ s` for a unit-amplitude signal.
pub fn signal_energy(scene: &Scene, sig: &ChannelSignal) -> f64 {
    let w = scene.whitener(sig.channel);
    match w.white_variance() {
        Some(v) => scene.cfg.column_len() as f64 * sig.lambda_energy() / v,
        None => sig.extent.iter().map(|r| w.quad_form(&sig.stacked(r)).unwrap_or(0.0)).sum(),
    }
}

/// Variance `E|α|²` that yields the target per-CPI SNR for a reflector at
/// `state`: `SNR = E|α|²·Σ_{r∈𝓔} sᴴΣ⁻¹s`, i.e. `LN·Λ̄·E|α|²/σ²` for white
/// noise.
pub fn reflectivity_variance(
    snr_db: f64,
    state: &KinematicState,
    scene: &Scene,
    m: usize,
    dt: f64,
) -> Result<f64, SimError> {
    let sig = ChannelSignal::new(scene, state, m, dt, PhaseConvention::Carrier)?;
    let e = signal_energy(scene, &sig);
    if !(e > 0.0) {
        return Err(SimError::EmptyExtent { channel: m });
    }
    Ok(db_to_linear(snr_db) / e)
}

/// Circular complex Gaussian reflectivity at the target SNR.
pub fn draw_reflectivity<R: Rng + ?Sized>(
    snr_db: f64,
    state: &KinematicState,
    scene: &Scene,
    m: usize,
    dt: f64,
    rng: &mut R,
) -> Result<C64, SimError> {
    let var = reflectivity_variance(snr_db, state, scene, m, dt)?;
    Ok(standard_cn(rng) * var.sqrt())
}

/// Offsets for a batch: zero for channel 0, uniform on `[0, T − margin)` for
/// the others.
pub fn draw_sync_offsets<R: Rng + ?Sized>(cfg: &SceneConfig, margin_s: f64, rng: &mut R) -> Vec<f64> {
    let hi = (cfg.pri_s - margin_s).max(0.0);
    (0..cfg.num_channels).map(|m| if m == 0 { 0.0 } else { rng.random::<f64>() * hi }).collect()
}

/// Direct-path geometry of channel `m`: the transmitter as a still reflector
/// seen over the one-way baseline.
#[derive(Debug, Clone)]
pub struct DirectPath {
    pub channel: usize,
    /// One-way delay `τ(X_m)`.
    pub tau: f64,
    /// Angle of arrival of the direct signal.
    pub theta: f64,
    pub spatial: Vec<C64>,
}

impl DirectPath {
    pub fn new(scene: &Scene, m: usize) -> Result<Self, SimError> {
        if m == 0 || m >= scene.num_channels() {
            return Err(SimError::MonostaticDirectPath);
        }
        let cfg = &scene.cfg;
        let tx = KinematicState::new(cfg.tx(m)[0], cfg.tx(m)[1], 0.0, 0.0);
        let tau = tx.distance_to(cfg.rx_pos) / cfg.speed_of_light;
        let theta = crate::model::geometry::bearing_to(&tx, cfg.rx_pos)?;
        let spatial = crate::model::spatial_steering(theta, cfg.num_elements);
        Ok(DirectPath { channel: m, tau, theta, spatial })
    }

    /// Delay of the direct signal in bins, `(τ + Δt)/T_p`.
    pub fn delay_bins(&self, scene: &Scene, dt: f64) -> f64 {
        crate::model::signal::snap((self.tau + dt) / scene.cfg.pulse_dur_s)
    }

    pub fn extent(&self, scene: &Scene, dt: f64) -> Extent {
        Extent::from_delay(self.delay_bins(scene, dt), scene.cfg.num_range_bins)
    }

    /// Carrier phase `s(τ) = exp(−jω_cτ)`.
    pub fn carrier(&self, scene: &Scene) -> C64 {
        C64::from_polar(1.0, -scene.cfg.omega_c() * self.tau)
    }

    /// Beamformer `h = s(τ)·s_s(θ) ⊗ 1`.
    pub fn beamformer(&self, scene: &Scene) -> Vec<C64> {
        let c = self.carrier(scene);
        let n = scene.cfg.num_pulses;
        self.spatial.iter().flat_map(|&s| std::iter::repeat_n(s * c, n)).collect()
    }

    /// Mean of column `r` per unit `√E`.
    pub fn unit_column(&self, scene: &Scene, r: usize, dt: f64) -> Vec<C64> {
        let lam = scene.waveform.eval_lag(r as f64 - self.delay_bins(scene, dt));
        let a = C64::from_polar(1.0, -scene.cfg.omega_c() * dt) * lam;
        self.beamformer(scene).into_iter().map(|v| v * a).collect()
    }

    /// Pulse energy giving the configured direct-path SNR
    /// `LN·Λ̄·E / tr(Σ)`, with `Λ̄ = Σ_{r∈𝓔̃} |Λ|²`.
    pub fn energy_for_snr(&self, scene: &Scene, snr_db: f64, dt: f64) -> Result<f64, SimError> {
        let ext = self.extent(scene, dt);
        if ext.is_empty() {
            return Err(SimError::Model(ModelError::RangeAmbiguity {
                channel: self.channel,
                delay_s: self.tau + dt,
                pri_s: scene.cfg.pri_s,
            }));
        }
        let d = self.delay_bins(scene, dt);
        let lam: f64 = ext.iter().map(|r| scene.waveform.eval_lag(r as f64 - d).norm_sqr()).sum();
        let w = scene.whitener(self.channel);
        let ln = scene.cfg.column_len() as f64;
        Ok(db_to_linear(snr_db) * w.trace() / (ln * lam))
    }
}

/// Add `√E·s̃_m(r)` to every column of the direct extent.
pub fn inject_direct_path(cube: &mut DataCube, scene: &Scene, m: usize, energy: f64, dt: f64) -> Result<(), SimError> {
    let dp = DirectPath::new(scene, m)?;
    let amp = energy.sqrt();
    for r in dp.extent(scene, dt).iter() {
        let col = dp.unit_column(scene, r, dt);
        for (v, s) in cube.column_mut(r).iter_mut().zip(col) {
            *v += s * amp;
        }
    }
    Ok(())
}

/// Draw the trajectory and reflectivities of one run.
pub fn generate_truth(
    scene: &Scene,
    x0: &KinematicState,
    num_cpis: usize,
    sync_offsets: &[f64],
    hypothesis: Hypothesis,
    seed: u64,
    run: u64,
) -> Result<GroundTruth, SimError> {
    let cfg = &scene.cfg;
    let mut rng = substream(seed, run, 0, 0, Purpose::Trajectory);
    let trajectory = sample_trajectory(x0, num_cpis, cfg, &mut rng);
    let mut reflectivities = vec![Vec::with_capacity(num_cpis); cfg.num_channels];
    for (k, x) in trajectory.iter().enumerate() {
        for (m, row) in reflectivities.iter_mut().enumerate() {
            let mut r = substream(seed, run, k as u64, m as u64, Purpose::Reflectivity);
            row.push(draw_reflectivity(cfg.snr_db, x, scene, m, sync_offsets[m], &mut r)?);
        }
    }
    let mut direct_energy = vec![0.0; cfg.num_channels];
    for (m, e) in direct_energy.iter_mut().enumerate().skip(1) {
        *e = DirectPath::new(scene, m)?.energy_for_snr(scene, cfg.direct_snr_db, sync_offsets[m])?;
    }
    Ok(GroundTruth {
        trajectory,
        reflectivities,
        sync_offsets: sync_offsets.to_vec(),
        direct_energy,
        hypothesis,
        seed,
        run,
    })
}

/// Cube of channel `m` at CPI `k` (zero-based) with its own noise substream.
pub fn synthesize_cube(
    k: usize,
    truth: &GroundTruth,
    scene: &Scene,
    m: usize,
    opts: SimOptions,
) -> Result<DataCube, SimError> {
    let mut rng = substream(truth.seed, truth.run, k as u64, m as u64, Purpose::Noise);
    synthesize_cube_with(k, truth, scene, m, opts, &mut rng)
}

pub fn synthesize_cube_with(
    k: usize,
    truth: &GroundTruth,
    scene: &Scene,
    m: usize,
    opts: SimOptions,
    rng: &mut ChaCha8Rng,
) -> Result<DataCube, SimError> {
    let cfg = &scene.cfg;
    let mut cube = DataCube::zeros(m, k, cfg.num_elements, cfg.num_range_bins, cfg.num_pulses);
    if !opts.noise_free {
        let w = scene.whitener(m);
        for r in 0..cfg.num_range_bins {
            w.add_sample(rng, cube.column_mut(r));
        }
    }
    if truth.hypothesis == Hypothesis::H1 {
        let dt = truth.sync_offsets[m];
        let sig = ChannelSignal::new(scene, &truth.trajectory[k], m, dt, PhaseConvention::Carrier)?;
        let alpha = truth.reflectivities[m][k];
        for r in sig.extent.iter() {
            sig.add_to(r, alpha, cube.column_mut(r));
        }
    }
    if opts.direct_path && m > 0 {
        inject_direct_path(&mut cube, scene, m, truth.direct_energy[m], truth.sync_offsets[m])?;
    }
    Ok(cube)
}

/// Cubes of every channel at CPI `k`.
pub fn synthesize_cpi(
    k: usize,
    truth: &GroundTruth,
    scene: &Scene,
    opts: SimOptions,
) -> Result<Vec<DataCube>, SimError> {
    (0..scene.num_channels()).map(|m| synthesize_cube(k, truth, scene, m, opts)).collect()
}

/// State vector helper for covariance checks.
pub fn state_vector(x: &KinematicState) -> Vector4<f64> {
    Vector4::from(x.to_array())
}
