use std::f64::consts::PI;

use crate::C64;

use super::WaveformKind;

/// Tabulated, unit-peak autocorrelation of the transmitted pulse.
///
/// Lags are expressed in pulse durations: `eval_lag(x)` returns `Λ(x·T_p)`.
/// The table covers `[0, 1]` with `n` intervals; negative lags use conjugate
/// symmetry and `|x| ≥ 1` returns zero.
#[derive(Debug, Clone)]
pub struct Waveform {
    kind: WaveformKind,
    time_bandwidth: f64,
    table: Vec<C64>,
}

const SIMPSON_INTERVALS: usize = 1024;

impl Waveform {
    pub fn new(kind: WaveformKind, bandwidth_hz: f64, pulse_dur_s: f64, oversample: usize) -> Self {
        let bt = match kind {
            WaveformKind::Lfm => bandwidth_hz * pulse_dur_s,
            WaveformKind::Rect => 0.0,
        };
        let n = oversample.max(2) * (bt.ceil() as usize).max(1);
        let mut table: Vec<C64> = (0..=n).map(|i| raw_autocorr(bt, i as f64 / n as f64)).collect();
        let peak = table[0];
        for v in table.iter_mut() {
            *v /= peak;
        }
        table[n] = C64::new(0.0, 0.0);
        Waveform { kind, time_bandwidth: bt, table }
    }

    pub fn kind(&self) -> WaveformKind {
        self.kind
    }

    /// Product of sweep bandwidth and pulse duration (zero for `Rect`).
    pub fn time_bandwidth(&self) -> f64 {
        self.time_bandwidth
    }

    /// Number of table intervals per pulse duration.
    pub fn intervals(&self) -> usize {
        self.table.len() - 1
    }

    /// `Λ` at a lag of `x` pulse durations.
    pub fn eval_lag(&self, x: f64) -> C64 {
        let a = x.abs();
        if !(a < 1.0) {
            return C64::new(0.0, 0.0);
        }
        let n = self.intervals();
        let pos = a * n as f64;
        let i = (pos.floor() as usize).min(n - 1);
        let frac = pos - i as f64;
        let v = self.table[i] * (1.0 - frac) + self.table[i + 1] * frac;
        if x < 0.0 {
            v.conj()
        } else {
            v
        }
    }

    /// `Λ(t)` for a lag in seconds.
    pub fn eval(&self, t: f64, pulse_dur_s: f64) -> C64 {
        self.eval_lag(t / pulse_dur_s)
    }
}

/// Unit-duration pulse `u(s)` with chirp `bt`: `exp(jπ·bt·(s − ½)²)`.
fn pulse(bt: f64, s: f64) -> C64 {
    let d = s - 0.5;
    C64::from_polar(1.0, PI * bt * d * d)
}

/// `∫ u(s + x) u*(s) ds` over the overlap `[0, 1 − x]`, composite Simpson.
fn raw_autocorr(bt: f64, x: f64) -> C64 {
    let len = 1.0 - x;
    if len <= 0.0 {
        return C64::new(0.0, 0.0);
    }
    let h = len / SIMPSON_INTERVALS as f64;
    let f = |s: f64| pulse(bt, s + x) * pulse(bt, s).conj();
    let mut acc = f(0.0) + f(len);
    for j in 1..SIMPSON_INTERVALS {
        let w = if j % 2 == 1 { 4.0 } else { 2.0 };
        acc += f(j as f64 * h) * w;
    }
    acc * (h / 3.0)
}
