//! Reflection-coefficient EM, direct-path synchronisation and the CRB.

pub mod crb;
pub mod em;
pub mod sync;

use thiserror::Error;

pub use crb::{crb_alpha, CrbResult};
pub use em::{em_e_step, em_m_step, marginal_log_lr, q_hat, run_em, EmIterate, EmOptions, EmState};
pub use sync::{
    beamform_direct, coarse_sync_init, estimate_sync, golden_section_max, golden_section_sync, golden_width,
    sync_objective, SyncEstimate, SyncHistory, SyncMode, GOLDEN_RATIO,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("degenerate E-step: every particle weight underflowed")]
    DegenerateEStep,
    #[error("channel {channel}: zero M-step denominator, no particle inside the window")]
    ZeroDenominator { channel: usize },
    #[error("inverted search interval [{lo}, {hi}]")]
    InvertedInterval { lo: f64, hi: f64 },
    #[error("synchronisation history is empty")]
    EmptyHistory,
    #[error(transparent)]
    Sim(#[from] crate::sim::SimError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}
