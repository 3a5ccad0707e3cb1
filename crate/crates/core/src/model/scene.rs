use super::{ModelError, SceneConfig, Waveform, Whitener};

/// Validated configuration with its precomputed waveform table and per-channel
/// whitening factors. Immutable and shareable across threads.
#[derive(Debug, Clone)]
pub struct Scene {
    pub cfg: SceneConfig,
    pub waveform: Waveform,
    pub whiteners: Vec<Whitener>,
}

impl Scene {
    pub fn new(cfg: SceneConfig) -> Result<Self, ModelError> {
        cfg.validate()?;
        let waveform = Waveform::new(cfg.waveform, cfg.bandwidth_hz, cfg.pulse_dur_s, cfg.waveform_oversample);
        let dim = cfg.column_len();
        let whiteners =
            cfg.noise_cov.iter().enumerate().map(|(m, c)| Whitener::new(c, dim, m)).collect::<Result<Vec<_>, _>>()?;
        Ok(Scene { cfg, waveform, whiteners })
    }

    pub fn num_channels(&self) -> usize {
        self.cfg.num_channels
    }

    pub fn whitener(&self, m: usize) -> &Whitener {
        &self.whiteners[m]
    }
}
