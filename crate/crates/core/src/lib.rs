//! Multistatic radar detection by simultaneous trajectory estimation and
//! long-time integration.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: scene configuration, geometry, steering vectors, waveform
//!   autocorrelation and the stacked signal model.
//! * [`sim`]: ground-truth trajectories, reflectivities and data cubes.
//! * [`likelihood`]: whitened inner products and log-likelihood ratios.
//! * [`tracker`]: bootstrap particle filter over the kinematic state.
//! * [`estimators`]: particle EM for reflection coefficients, golden-section
//!   synchronisation and the Cramér-Rao bound.
//! * [`detector`]: recursive integration, CFAR thresholds, SNR accounting and
//!   the baseline detectors.
//! * [`harness`]: Monte Carlo experiments, metrics and file outputs.
//!
//! Channel indices are zero-based throughout: channel `0` is the mono-static
//! pair (transmitter co-located with the receiver), channels `1..M` are
//! bi-static.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod detector;
pub mod estimators;
pub mod harness;
pub mod likelihood;
pub mod model;
pub mod rng;
pub mod sim;
pub mod tracker;

pub use num_complex::Complex64 as C64;

pub use model::{DataCube, KinematicState, Scene, SceneConfig};
