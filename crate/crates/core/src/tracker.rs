//! Bootstrap particle filter over `[x, y, ẋ, ẏ]`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::likelihood::normalize_log_weights;
use crate::model::{KinematicState, SceneConfig};
use crate::sim::propagate;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackerError {
    #[error("track divergence: every particle weight underflowed")]
    Divergence,
    #[error("update expected {expected} likelihoods, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid cell under test: {0}")]
    InvalidCell(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Predicted,
    Updated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    pub states: Vec<KinematicState>,
    pub weights: Vec<f64>,
    pub stage: Stage,
}

/// Position part of a cell under test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PositionBounds {
    Cartesian {
        x: [f64; 2],
        y: [f64; 2],
    },
    /// Receiver-leg range and bearing (object-to-receiver angle) around `site`.
    RangeBearing {
        site: [f64; 2],
        range: [f64; 2],
        bearing: [f64; 2],
    },
}

/// Bounded set `𝓑` the filter is initialised on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellUnderTest {
    pub position: PositionBounds,
    pub vx: [f64; 2],
    pub vy: [f64; 2],
    pub grid: [usize; 2],
}

fn lerp(b: [f64; 2], i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.5 * (b[0] + b[1])
    } else {
        b[0] + (b[1] - b[0]) * i as f64 / (n - 1) as f64
    }
}

impl CellUnderTest {
    /// Range/bearing resolution cell containing `x`, with velocity bounds
    /// `±vel_half_width` and a `grid[0] × grid[1]` position lattice.
    pub fn resolution_cell(cfg: &SceneConfig, x: &KinematicState, vel_half_width: f64, grid: [usize; 2]) -> Self {
        let dr = cfg.range_resolution();
        let dth = cfg.bearing_resolution_rad();
        let rho = x.distance_to(cfg.rx_pos);
        let th = (cfg.rx_pos[1] - x.y).atan2(cfg.rx_pos[0] - x.x);
        let i = (rho / dr).floor();
        let j = (th / dth).floor();
        CellUnderTest {
            position: PositionBounds::RangeBearing {
                site: cfg.rx_pos,
                range: [i * dr, (i + 1.0) * dr],
                bearing: [j * dth, (j + 1.0) * dth],
            },
            vx: [-vel_half_width, vel_half_width],
            vy: [-vel_half_width, vel_half_width],
            grid,
        }
    }

    pub fn num_particles(&self) -> usize {
        self.grid[0] * self.grid[1]
    }

    pub fn validate(&self) -> Result<(), TrackerError> {
        let ok = |b: [f64; 2]| b[0].is_finite() && b[1].is_finite() && b[0] <= b[1];
        let pos_ok = match self.position {
            PositionBounds::Cartesian { x, y } => ok(x) && ok(y),
            PositionBounds::RangeBearing { range, bearing, .. } => ok(range) && ok(bearing) && range[0] >= 0.0,
        };
        if !pos_ok || !ok(self.vx) || !ok(self.vy) {
            return Err(TrackerError::InvalidCell("bounds must be finite with lo <= hi".into()));
        }
        if self.num_particles() == 0 {
            return Err(TrackerError::InvalidCell("grid must be non-empty".into()));
        }
        Ok(())
    }

    /// Lattice point `(i, j)`.
    pub fn grid_point(&self, i: usize, j: usize) -> [f64; 2] {
        let [n1, n2] = self.grid;
        match self.position {
            PositionBounds::Cartesian { x, y } => [lerp(x, i, n1), lerp(y, j, n2)],
            PositionBounds::RangeBearing { site, range, bearing } => {
                let rho = lerp(range, i, n1);
                let th = lerp(bearing, j, n2);
                [site[0] - rho * th.cos(), site[1] - rho * th.sin()]
            }
        }
    }

    /// Centre of the position bounds with zero velocity offset.
    pub fn center(&self) -> KinematicState {
        let p = match self.position {
            PositionBounds::Cartesian { x, y } => [0.5 * (x[0] + x[1]), 0.5 * (y[0] + y[1])],
            PositionBounds::RangeBearing { site, range, bearing } => {
                let rho = 0.5 * (range[0] + range[1]);
                let th = 0.5 * (bearing[0] + bearing[1]);
                [site[0] - rho * th.cos(), site[1] - rho * th.sin()]
            }
        };
        KinematicState::new(p[0], p[1], 0.5 * (self.vx[0] + self.vx[1]), 0.5 * (self.vy[0] + self.vy[1]))
    }

    pub fn contains(&self, x: &KinematicState) -> bool {
        let inb = |b: [f64; 2], v: f64| v >= b[0] && v <= b[1];
        match self.position {
            PositionBounds::Cartesian { x: bx, y: by } => inb(bx, x.x) && inb(by, x.y),
            PositionBounds::RangeBearing { site, range, bearing } => {
                let rho = x.distance_to(site);
                let th = (site[1] - x.y).atan2(site[0] - x.x);
                inb(range, rho) && inb(bearing, th)
            }
        }
    }
}

/// Regular position lattice, uniform random velocities, equal weights.
pub fn init_particles<R: Rng + ?Sized>(cell: &CellUnderTest, rng: &mut R) -> ParticleCloud {
    let [n1, n2] = cell.grid;
    let mut states = Vec::with_capacity(n1 * n2);
    let uni = |b: [f64; 2], rng: &mut R| if b[1] > b[0] { rng.random_range(b[0]..b[1]) } else { b[0] };
    for i in 0..n1 {
        for j in 0..n2 {
            let p = cell.grid_point(i, j);
            let vx = uni(cell.vx, rng);
            let vy = uni(cell.vy, rng);
            states.push(KinematicState::new(p[0], p[1], vx, vy));
        }
    }
    let p = states.len();
    ParticleCloud { states, weights: vec![1.0 / p as f64; p], stage: Stage::Updated }
}

impl ParticleCloud {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Markov prediction; weights carried unchanged.
    pub fn predict<R: Rng + ?Sized>(&mut self, cfg: &SceneConfig, rng: &mut R) {
        for x in self.states.iter_mut() {
            *x = propagate(x, cfg.illum_period_s, cfg.process_noise_var, rng);
        }
        self.stage = Stage::Predicted;
    }

    /// Multiply weights by `exp(log_lik)` and renormalise in the log domain.
    pub fn update(&mut self, log_lik: &[f64]) -> Result<(), TrackerError> {
        if log_lik.len() != self.len() {
            return Err(TrackerError::LengthMismatch { expected: self.len(), got: log_lik.len() });
        }
        let mut lw: Vec<f64> = self
            .weights
            .iter()
            .zip(log_lik)
            .map(|(w, l)| if *w > 0.0 { w.ln() + l } else { f64::NEG_INFINITY })
            .collect();
        normalize_log_weights(&mut lw).ok_or(TrackerError::Divergence)?;
        self.weights = lw;
        self.stage = Stage::Updated;
        Ok(())
    }

    /// `1 / Σ ζ²`.
    pub fn effective_count(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Systematic resampling when the effective count falls below
    /// `threshold`. Returns whether resampling happened.
    pub fn resample_if_needed<R: Rng + ?Sized>(&mut self, threshold: f64, rng: &mut R) -> bool {
        if self.effective_count() >= threshold {
            return false;
        }
        let p = self.len();
        let u0 = rng.random::<f64>() / p as f64;
        let idx = systematic_indices(&self.weights, u0);
        self.states = idx.iter().map(|&i| self.states[i]).collect();
        self.weights = vec![1.0 / p as f64; p];
        true
    }

    /// Weighted mean state.
    pub fn estimate_state(&self) -> KinematicState {
        let mut acc = [0.0; 4];
        for (x, w) in self.states.iter().zip(&self.weights) {
            for (a, v) in acc.iter_mut().zip(x.to_array()) {
                *a += w * v;
            }
        }
        let total: f64 = self.weights.iter().sum();
        KinematicState::from_array(acc.map(|a| a / total))
    }
}

/// Ancestor indices of systematic resampling with offset `u0 ∈ [0, 1/P)`.
pub fn systematic_indices(weights: &[f64], u0: f64) -> Vec<usize> {
    let p = weights.len();
    let total: f64 = weights.iter().sum();
    let mut out = Vec::with_capacity(p);
    let mut cum = weights[0] / total;
    let mut i = 0;
    for j in 0..p {
        let u = u0 + j as f64 / p as f64;
        while u > cum && i + 1 < p {
            i += 1;
            cum += weights[i] / total;
        }
        out.push(i);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cart_cell() -> CellUnderTest {
        CellUnderTest {
            position: PositionBounds::Cartesian { x: [100.0, 250.0], y: [-30.0, 60.0] },
            vx: [-60.0, 60.0],
            vy: [-60.0, 60.0],
            grid: [20, 20],
        }
    }

    #[test]
    fn grid_init() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = init_particles(&cart_cell(), &mut rng);
        assert_eq!(c.len(), 400);
        assert!(c.weights.iter().all(|w| *w == 1.0 / 400.0));
        let mx = c.states.iter().map(|s| s.x).sum::<f64>() / 400.0;
        let my = c.states.iter().map(|s| s.y).sum::<f64>() / 400.0;
        assert!((mx - 175.0).abs() < 1e-9 && (my - 15.0).abs() < 1e-9);
        assert!((c.states[20].x - c.states[0].x - 150.0 / 19.0).abs() < 1e-9);
        assert!((c.states[1].y - c.states[0].y - 90.0 / 19.0).abs() < 1e-9);
        assert!(c.states.iter().all(|s| s.vx.abs() <= 60.0 && s.vy.abs() <= 60.0));
    }

    #[test]
    fn point_cell_is_degenerate() {
        let cell = CellUnderTest {
            position: PositionBounds::Cartesian { x: [5.0, 5.0], y: [7.0, 7.0] },
            vx: [1.0, 1.0],
            vy: [2.0, 2.0],
            grid: [3, 3],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = init_particles(&cell, &mut rng);
        assert!(c.states.iter().all(|s| *s == KinematicState::new(5.0, 7.0, 1.0, 2.0)));
    }

    #[test]
    fn resolution_cell_contains_state() {
        let cfg = SceneConfig::reference();
        let x = KinematicState::new(1001.0, 1005.0, 10.0, 50.0);
        let cell = CellUnderTest::resolution_cell(&cfg, &x, 60.0, [20, 20]);
        assert!(cell.contains(&x));
        if let PositionBounds::RangeBearing { range, .. } = cell.position {
            assert_eq!(range, [1050.0, 1200.0]);
        }
    }

    #[test]
    fn effective_count_cases() {
        let mut c = ParticleCloud {
            states: vec![KinematicState::default(); 3],
            weights: vec![0.5, 0.25, 0.25],
            stage: Stage::Updated,
        };
        assert!((c.effective_count() - 1.0 / 0.375).abs() < 1e-12);
        c.weights = vec![1.0, 0.0, 0.0];
        assert_eq!(c.effective_count(), 1.0);
        c.weights = vec![1.0 / 3.0; 3];
        assert!((c.effective_count() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn systematic_counts_within_one() {
        let w = [0.1, 0.35, 0.05, 0.3, 0.2];
        for s in 0..50 {
            let u0 = s as f64 / 50.0 / 5.0;
            let idx = systematic_indices(&w, u0);
            for (i, wi) in w.iter().enumerate() {
                let n = idx.iter().filter(|&&j| j == i).count() as f64;
                assert!((n - 5.0 * wi).abs() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn update_toy_bayes() {
        let states = vec![
            KinematicState::new(0.0, 0.0, 0.0, 0.0),
            KinematicState::new(1.0, 2.0, 3.0, 4.0),
            KinematicState::new(-2.0, 5.0, 1.0, -1.0),
        ];
        let prior = [0.2, 0.5, 0.3];
        let lik = [0.7f64, 0.1, 1.3];
        let mut c = ParticleCloud { states: states.clone(), weights: prior.to_vec(), stage: Stage::Predicted };
        c.update(&lik.map(|l| l.ln())).unwrap();
        let z: f64 = prior.iter().zip(&lik).map(|(p, l)| p * l).sum();
        let mut want = [0.0; 4];
        for ((s, p), l) in states.iter().zip(&prior).zip(&lik) {
            for (a, v) in want.iter_mut().zip(s.to_array()) {
                *a += p * l / z * v;
            }
        }
        let got = c.estimate_state().to_array();
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((c.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let err = c.update(&[f64::NEG_INFINITY; 3]);
        assert_eq!(err, Err(TrackerError::Divergence));
    }
}
