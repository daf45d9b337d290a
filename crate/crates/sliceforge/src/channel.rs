//! Per-UE link budget: free-space path loss, single-tap fading, thermal
//! noise and a Doppler penalty, composed into an SNR and an achievable
//! per-PRB rate for each control epoch.

use serde::{Deserialize, Serialize};

use crate::domain::{RngStream, ScenarioConfig, UeProfile, DISTANCE_MAX_M, DISTANCE_MIN_M};
use crate::error::Error;

/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 2.998e8;
/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380649e-23;
/// The single-tap fading gain applied to every UE.
pub const FADING_GAIN: (f64, f64) = (0.85, 0.25);

/// Link-budget snapshot for one UE at one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    pub ue_id: u32,
    pub distance_m: f64,
    pub pathloss_db: f64,
    /// Complex single-tap gain (re, im).
    pub fading_gain: (f64, f64),
    /// Power gain of the fading tap, dB.
    pub fading_gain_db: f64,
    pub doppler_hz: f64,
    pub snr_db: f64,
    pub per_prb_rate_bps: f64,
}

impl ChannelState {
    /// Combined link loss fed to the RL state: path loss minus fading gain.
    pub fn link_loss_db(&self) -> f64 {
        self.pathloss_db - self.fading_gain_db
    }
}

/// Free-space path loss in dB: 20*log10(4*pi*d*f/c).
pub fn fspl_db(distance_m: f64, freq_hz: f64) -> Result<f64, Error> {
    if distance_m <= 0.0 || freq_hz <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "fspl requires positive distance and frequency, got d={distance_m}, f={freq_hz}"
        )));
    }
    Ok(20.0 * (4.0 * std::f64::consts::PI * distance_m * freq_hz / SPEED_OF_LIGHT).log10())
}

/// Power gain of a complex tap in dB: 10*log10(re^2 + im^2).
pub fn fading_power_gain_db(gain: (f64, f64)) -> Result<f64, Error> {
    let p = gain.0 * gain.0 + gain.1 * gain.1;
    if p <= 0.0 {
        return Err(Error::InvalidArgument("fading gain must be nonzero".into()));
    }
    Ok(10.0 * p.log10())
}

/// Doppler shift for a UE moving at `speed_kmh` on carrier `freq_hz`.
pub fn doppler_shift_hz(speed_kmh: f64, freq_hz: f64) -> f64 {
    (speed_kmh / 3.6) * freq_hz / SPEED_OF_LIGHT
}

/// Thermal noise power over `bandwidth_hz` at `temperature_k`, in dBm.
pub fn noise_power_dbm(bandwidth_hz: f64, temperature_k: f64) -> Result<f64, Error> {
    if bandwidth_hz <= 0.0 || temperature_k <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "noise power requires positive bandwidth and temperature, got B={bandwidth_hz}, T={temperature_k}"
        )));
    }
    Ok(10.0 * (BOLTZMANN * temperature_k * bandwidth_hz / 1e-3).log10())
}

/// Bounded SNR penalty standing in for Doppler-induced estimation loss.
pub fn doppler_penalty_db(doppler_hz: f64) -> f64 {
    (doppler_hz / 100.0).min(3.0)
}

/// Compose the link budget into an SNR over the full cell bandwidth.
pub fn snr_db(cfg: &ScenarioConfig, pathloss_db: f64, fading_db: f64, doppler_hz: f64) -> f64 {
    let noise = noise_power_dbm(cfg.total_bandwidth_hz(), cfg.noise_temperature_k)
        .expect("validated scenario has positive bandwidth and temperature");
    cfg.tx_power_dbm - pathloss_db + fading_db - noise - doppler_penalty_db(doppler_hz)
}

/// Achievable rate of one PRB: Shannon capacity scaled by the link
/// efficiency and clipped at the spectral-efficiency ceiling.
pub fn per_prb_rate_bps(snr_db: f64, cfg: &ScenarioConfig) -> f64 {
    let se = (1.0 + 10f64.powf(snr_db / 10.0)).log2().min(cfg.se_cap);
    cfg.prb_bandwidth_hz * cfg.link_efficiency * se
}

/// Initial channel snapshot for a UE, from its configured distance.
pub fn init_channel(ue: &UeProfile, cfg: &ScenarioConfig) -> ChannelState {
    channel_at(ue, cfg, ue.initial_distance_m)
}

fn channel_at(ue: &UeProfile, cfg: &ScenarioConfig, distance_m: f64) -> ChannelState {
    let pathloss_db = fspl_db(distance_m, cfg.carrier_freq_hz).expect("distance bounds > 0");
    let fading_gain_db = fading_power_gain_db(FADING_GAIN).expect("fixed tap is nonzero");
    let doppler_hz = doppler_shift_hz(ue.speed_kmh, cfg.carrier_freq_hz);
    let snr = snr_db(cfg, pathloss_db, fading_gain_db, doppler_hz);
    ChannelState {
        ue_id: ue.ue_id,
        distance_m,
        pathloss_db,
        fading_gain: FADING_GAIN,
        fading_gain_db,
        doppler_hz,
        snr_db: snr,
        per_prb_rate_bps: per_prb_rate_bps(snr, cfg),
    }
}

/// Advance one epoch: mobile UEs take a reflected random-walk step of
/// +/- speed * epoch seconds within [500, 2000] m; stationary UEs keep
/// their distance. The link budget is recomputed either way.
pub fn update_channel(
    ue: &UeProfile,
    prev: &ChannelState,
    cfg: &ScenarioConfig,
    rng: &mut RngStream,
) -> ChannelState {
    let distance = if ue.speed_kmh > 0.0 {
        let step = ue.speed_kmh / 3.6 * (cfg.epoch_ms as f64 / 1000.0);
        reflect(prev.distance_m + rng.sign() * step)
    } else {
        prev.distance_m
    };
    channel_at(ue, cfg, distance)
}

fn reflect(mut d: f64) -> f64 {
    // One reflection suffices for steps smaller than the band width.
    if d < DISTANCE_MIN_M {
        d = DISTANCE_MIN_M + (DISTANCE_MIN_M - d);
    }
    if d > DISTANCE_MAX_M {
        d = DISTANCE_MAX_M - (d - DISTANCE_MAX_M);
    }
    d.clamp(DISTANCE_MIN_M, DISTANCE_MAX_M)
}
