//! Physical types and the deterministic signal model.

pub mod config;
pub mod cube;
pub mod geometry;
pub mod noise;
pub mod scene;
pub mod signal;
pub mod steering;
pub mod waveform;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{NoiseCov, SceneConfig, WaveformKind, SPEED_OF_LIGHT, SPEED_OF_LIGHT_ROUNDED};
pub use cube::DataCube;
pub use geometry::{bearings, doppler, ranges, time_of_flight, Ranges};
pub use noise::Whitener;
pub use scene::Scene;
pub use signal::{delay_in_bins, range_extent, signal_model, ChannelSignal, Extent, PhaseConvention};
pub use steering::{spatial_steering, temporal_steering, SteeringVectors};
pub use waveform::Waveform;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("channel {channel} out of range for {channels} channels")]
    ChannelOutOfRange { channel: usize, channels: usize },
    #[error("bearing undefined: object coincides with a site at ({x}, {y})")]
    UndefinedBearing { x: f64, y: f64 },
    #[error("channel {channel}: delay {delay_s} s outside the unambiguous window [0, {pri_s})")]
    RangeAmbiguity { channel: usize, delay_s: f64, pri_s: f64 },
    #[error("noise covariance of channel {channel} is not positive definite")]
    NotPositiveDefinite { channel: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("malformed cube dump: {0}")]
    BadCubeDump(String),
}

/// Planar position and velocity `[x, y, ẋ, ẏ]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KinematicState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

impl KinematicState {
    pub const fn new(x: f64, y: f64, vx: f64, vy: f64) -> Self {
        KinematicState { x, y, vx, vy }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.vx, self.vy]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        KinematicState::new(a[0], a[1], a[2], a[3])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    pub fn distance_to(&self, p: [f64; 2]) -> f64 {
        (self.x - p[0]).hypot(self.y - p[1])
    }
}
