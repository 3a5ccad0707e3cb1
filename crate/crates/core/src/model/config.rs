use serde::{Deserialize, Serialize};

use super::ModelError;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Rounded value used when reproducing the reference example numbers.
pub const SPEED_OF_LIGHT_ROUNDED: f64 = 3.0e8;

/// Per-channel noise covariance as it appears in a config file.
///
/// A bare number is a white-noise variance `σ²` (covariance `σ²·I`). A table
/// with `re`/`im` row-major matrices gives a full Hermitian covariance of
/// dimension `L·N`, indexed in the same element-major order as
/// [`DataCube::column`](super::DataCube::column).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseCov {
    Variance(f64),
    Matrix { re: Vec<Vec<f64>>, im: Vec<Vec<f64>> },
}

impl NoiseCov {
    /// Trace of the covariance for a column of dimension `dim`.
    pub fn trace(&self, dim: usize) -> f64 {
        match self {
            NoiseCov::Variance(v) => v * dim as f64,
            NoiseCov::Matrix { re, .. } => (0..re.len()).map(|i| re[i][i]).sum(),
        }
    }
}

/// Pulse shape used to build the autocorrelation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WaveformKind {
    /// Linear-FM up-chirp sweeping the full bandwidth over the pulse.
    #[default]
    Lfm,
    /// Constant-envelope, zero-chirp pulse (triangular autocorrelation).
    Rect,
}

fn default_c() -> f64 {
    SPEED_OF_LIGHT
}
fn default_bearing_res() -> f64 {
    5.1
}
fn default_snr() -> f64 {
    -6.0
}
fn default_oversample() -> usize {
    16
}

/// Geometry, waveform, timing, noise and SNR parameters of a scene.
///
/// Units are SI throughout. `pri_s` must equal `num_range_bins * pulse_dur_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub pulse_dur_s: f64,
    pub pri_s: f64,
    pub num_range_bins: usize,
    pub num_pulses: usize,
    pub num_elements: usize,
    pub illum_period_s: f64,
    pub num_channels: usize,
    pub rx_pos: [f64; 2],
    pub tx_pos: Vec<[f64; 2]>,
    /// Derived as half the carrier wavelength. Accepted on input only so a
    /// resolved config can be read back; a mismatching value is rejected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element_spacing: Option<f64>,
    pub noise_cov: Vec<NoiseCov>,
    pub process_noise_var: f64,
    /// Ground-truth synchronisation offsets. Empty means "draw per batch".
    #[serde(default)]
    pub sync_offsets: Vec<f64>,
    #[serde(default = "default_c")]
    pub speed_of_light: f64,
    /// Bearing resolution of the conventional processing chain, degrees.
    #[serde(default = "default_bearing_res")]
    pub bearing_resolution_deg: f64,
    /// Per-channel, per-CPI reflection SNR after coherent integration, dB.
    #[serde(default = "default_snr")]
    pub snr_db: f64,
    /// Direct-path SNR of the bi-static channels, dB.
    #[serde(default)]
    pub direct_snr_db: f64,
    #[serde(default)]
    pub waveform: WaveformKind,
    /// Autocorrelation table samples per resolution cell.
    #[serde(default = "default_oversample")]
    pub waveform_oversample: usize,
}

impl SceneConfig {
    /// Transmitted signal parameters of the reference example, two channels,
    /// receiver at (500, 0) m and the remote transmitter at (0, 500) m.
    pub fn reference() -> Self {
        SceneConfig {
            carrier_freq_hz: 10.0e9,
            bandwidth_hz: 1.0e6,
            pulse_dur_s: 1.0e-6,
            pri_s: 100.0e-6,
            num_range_bins: 100,
            num_pulses: 20,
            num_elements: 20,
            illum_period_s: 0.1,
            num_channels: 2,
            rx_pos: [500.0, 0.0],
            tx_pos: vec![[500.0, 0.0], [0.0, 500.0]],
            element_spacing: None,
            noise_cov: vec![NoiseCov::Variance(1.0); 2],
            process_noise_var: 1.0,
            sync_offsets: Vec::new(),
            speed_of_light: SPEED_OF_LIGHT_ROUNDED,
            bearing_resolution_deg: 5.1,
            snr_db: -6.0,
            direct_snr_db: 0.0,
            waveform: WaveformKind::Lfm,
            waveform_oversample: 16,
        }
    }

    /// Four-channel variant: two extra remote transmitters at (0, -500) and
    /// (1000, -500) m.
    pub fn reference_four_channel() -> Self {
        let mut cfg = Self::reference();
        cfg.num_channels = 4;
        cfg.tx_pos.push([0.0, -500.0]);
        cfg.tx_pos.push([1000.0, -500.0]);
        cfg.noise_cov = vec![NoiseCov::Variance(1.0); 4];
        cfg
    }

    pub fn wavelength(&self) -> f64 {
        self.speed_of_light / self.carrier_freq_hz
    }

    /// Half-wavelength array spacing.
    pub fn spacing(&self) -> f64 {
        self.wavelength() / 2.0
    }

    pub fn omega_c(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.carrier_freq_hz
    }

    /// Length of a stacked column, `L·N`.
    pub fn column_len(&self) -> usize {
        self.num_elements * self.num_pulses
    }

    /// `c / 2B`, metres.
    pub fn range_resolution(&self) -> f64 {
        self.speed_of_light / (2.0 * self.bandwidth_hz)
    }

    /// `λ / 2NT`, m/s.
    pub fn velocity_resolution(&self) -> f64 {
        self.wavelength() / (2.0 * self.num_pulses as f64 * self.pri_s)
    }

    pub fn bearing_resolution_rad(&self) -> f64 {
        self.bearing_resolution_deg.to_radians()
    }

    /// Transmitter position of channel `m`.
    pub fn tx(&self, m: usize) -> [f64; 2] {
        self.tx_pos[m]
    }

    /// Synchronisation offset of channel `m`, zero when none are configured.
    pub fn sync_offset(&self, m: usize) -> f64 {
        self.sync_offsets.get(m).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        let positive = [
            ("carrier_freq_hz", self.carrier_freq_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("pulse_dur_s", self.pulse_dur_s),
            ("pri_s", self.pri_s),
            ("illum_period_s", self.illum_period_s),
            ("speed_of_light", self.speed_of_light),
            ("bearing_resolution_deg", self.bearing_resolution_deg),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.num_range_bins == 0 || self.num_pulses == 0 || self.num_elements == 0 {
            return bad("num_range_bins, num_pulses and num_elements must be positive".into());
        }
        if self.num_channels == 0 {
            return bad("num_channels must be positive".into());
        }
        let expected_pri = self.num_range_bins as f64 * self.pulse_dur_s;
        if ((self.pri_s - expected_pri) / expected_pri).abs() > 1e-9 {
            return bad(format!("pri_s ({}) must equal num_range_bins * pulse_dur_s ({expected_pri})", self.pri_s));
        }
        if self.tx_pos.len() != self.num_channels {
            return bad(format!("tx_pos has {} entries for {} channels", self.tx_pos.len(), self.num_channels));
        }
        if self.tx_pos[0] != self.rx_pos {
            return bad("channel 0 transmitter must be co-located with the receiver".into());
        }
        if self.noise_cov.len() != self.num_channels {
            return bad(format!("noise_cov has {} entries for {} channels", self.noise_cov.len(), self.num_channels));
        }
        if let Some(d) = self.element_spacing {
            if ((d - self.spacing()) / self.spacing()).abs() > 1e-9 {
                return bad(format!("element_spacing {d} differs from half wavelength {}", self.spacing()));
            }
        }
        if !(self.process_noise_var.is_finite() && self.process_noise_var >= 0.0) {
            return bad("process_noise_var must be non-negative".into());
        }
        if !self.sync_offsets.is_empty() {
            if self.sync_offsets.len() != self.num_channels {
                return bad("sync_offsets must be empty or have one entry per channel".into());
            }
            if self.sync_offsets[0] != 0.0 {
                return bad("sync_offsets[0] must be zero for the mono-static channel".into());
            }
            if self.sync_offsets[1..].iter().any(|&dt| !(0.0..self.pri_s).contains(&dt)) {
                return bad("sync offsets must lie in [0, pri_s)".into());
            }
        }
        if self.waveform_oversample < 2 {
            return bad("waveform_oversample must be at least 2".into());
        }
        let dim = self.column_len();
        for (m, cov) in self.noise_cov.iter().enumerate() {
            match cov {
                NoiseCov::Variance(v) if !(v.is_finite() && *v > 0.0) => {
                    return bad(format!("noise variance of channel {m} must be positive"));
                }
                NoiseCov::Matrix { re, im } => {
                    let square = |a: &Vec<Vec<f64>>| a.len() == dim && a.iter().all(|r| r.len() == dim);
                    if !square(re) || !square(im) {
                        return bad(format!("noise_cov[{m}] must be {dim}x{dim}"));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Resolved view including derived quantities, for provenance output.
    pub fn resolved(&self) -> SceneConfig {
        let mut cfg = self.clone();
        cfg.element_spacing = Some(self.spacing());
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_resolutions() {
        let cfg = SceneConfig::reference();
        cfg.validate().unwrap();
        assert!((cfg.range_resolution() - 150.0).abs() < 1e-9);
        assert!((cfg.velocity_resolution() - 7.5).abs() < 1e-9);
        assert!((cfg.spacing() - 0.015).abs() < 1e-15);
        assert!((cfg.pri_s - cfg.num_range_bins as f64 * cfg.pulse_dur_s).abs() < 1e-18);
    }

    #[test]
    fn rejects_inconsistent_pri() {
        let mut cfg = SceneConfig::reference();
        cfg.pri_s = 90e-6;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_nonzero_monostatic_offset() {
        let mut cfg = SceneConfig::reference();
        cfg.sync_offsets = vec![1e-6, 2e-6];
        assert!(cfg.validate().is_err());
        cfg.sync_offsets = vec![0.0, 2e-6];
        cfg.validate().unwrap();
        cfg.sync_offsets = vec![0.0, 200e-6];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn toml_round_trip_keeps_field_names() {
        let cfg = SceneConfig::reference();
        let text = toml::to_string(&cfg.resolved()).unwrap();
        assert!(text.contains("carrier_freq_hz"));
        assert!(text.contains("element_spacing"));
        let back: SceneConfig = toml::from_str(&text).unwrap();
        back.validate().unwrap();
        assert_eq!(back.tx_pos, cfg.tx_pos);
    }

    #[test]
    fn matrix_noise_parses() {
        let text = r#"
            carrier_freq_hz = 1e9
            bandwidth_hz = 1e6
            pulse_dur_s = 1e-6
            pri_s = 4e-6
            num_range_bins = 4
            num_pulses = 1
            num_elements = 2
            illum_period_s = 0.1
            num_channels = 1
            rx_pos = [0.0, 0.0]
            tx_pos = [[0.0, 0.0]]
            noise_cov = [{ re = [[2.0, 0.5], [0.5, 1.0]], im = [[0.0, 0.1], [-0.1, 0.0]] }]
            process_noise_var = 0.0
        "#;
        let cfg: SceneConfig = toml::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert!(matches!(cfg.noise_cov[0], NoiseCov::Matrix { .. }));
        assert!((cfg.noise_cov[0].trace(2) - 3.0).abs() < 1e-12);
    }
}
