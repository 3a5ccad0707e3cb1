use std::f64::consts::PI;

use super::{KinematicState, ModelError, SceneConfig};

/// Path lengths of a reflection: transmitter leg, receiver leg and their sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ranges {
    pub tx: f64,
    pub rx: f64,
    pub total: f64,
}

fn check_channel(cfg: &SceneConfig, m: usize) -> Result<(), ModelError> {
    if m >= cfg.num_channels || m >= cfg.tx_pos.len() {
        return Err(ModelError::ChannelOutOfRange { channel: m, channels: cfg.num_channels });
    }
    Ok(())
}

pub fn ranges(state: &KinematicState, cfg: &SceneConfig, m: usize) -> Result<Ranges, ModelError> {
    check_channel(cfg, m)?;
    let tx = state.distance_to(cfg.tx(m));
    let rx = state.distance_to(cfg.rx_pos);
    Ok(Ranges { tx, rx, total: tx + rx })
}

/// Bi-static time of flight `R_total / c`.
pub fn time_of_flight(state: &KinematicState, cfg: &SceneConfig, m: usize) -> Result<f64, ModelError> {
    Ok(ranges(state, cfg, m)?.total / cfg.speed_of_light)
}

/// Four-quadrant angle from the object to `site`.
pub fn bearing_to(state: &KinematicState, site: [f64; 2]) -> Result<f64, ModelError> {
    let dy = site[1] - state.y;
    let dx = site[0] - state.x;
    if dx == 0.0 && dy == 0.0 {
        return Err(ModelError::UndefinedBearing { x: state.x, y: state.y });
    }
    Ok(dy.atan2(dx))
}

/// Angle of arrival at the receiver and angle towards transmitter `m`.
pub fn bearings(state: &KinematicState, cfg: &SceneConfig, m: usize) -> Result<(f64, f64), ModelError> {
    check_channel(cfg, m)?;
    Ok((bearing_to(state, cfg.rx_pos)?, bearing_to(state, cfg.tx(m))?))
}

/// Doppler phase increment per PRI, radians.
pub fn doppler(state: &KinematicState, cfg: &SceneConfig, m: usize) -> Result<f64, ModelError> {
    let (th, th_m) = bearings(state, cfg, m)?;
    Ok(doppler_from_bearings(state, cfg, th, th_m))
}

pub(crate) fn doppler_from_bearings(state: &KinematicState, cfg: &SceneConfig, th: f64, th_m: f64) -> f64 {
    let k = 2.0 * PI * cfg.pri_s / cfg.wavelength();
    k * (state.vx * (th.cos() + th_m.cos()) + state.vy * (th.sin() + th_m.sin()))
}

/// Radial speed of the receiver leg, positive when the object approaches.
pub fn radial_velocity(state: &KinematicState, site: [f64; 2]) -> f64 {
    let dx = site[0] - state.x;
    let dy = site[1] - state.y;
    let r = dx.hypot(dy);
    if r == 0.0 {
        return 0.0;
    }
    (state.vx * dx + state.vy * dy) / r
}
