//! Per-slice sub-rewards and the weighted total reward, computed from
//! epoch-averaged KPIs. Every sub-reward is clipped to [-1, 0].

use serde::{Deserialize, Serialize};

use crate::domain::RewardWeights;
use crate::error::Error;

/// Per-slice sub-rewards plus their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub urllc: f64,
    pub embb: f64,
    pub mmtc: f64,
    pub total: f64,
}

fn clip_unit(x: f64) -> f64 {
    x.clamp(-1.0, 0.0)
}

/// Latency penalty: clamp((t_target - t_avg)/t_target, -1, 0).
pub fn urllc_reward(t_avg_ms: f64, t_target_ms: f64) -> Result<f64, Error> {
    if t_target_ms <= 0.0 {
        return Err(Error::InvalidArgument("t_target must be positive".into()));
    }
    Ok(clip_unit((t_target_ms - t_avg_ms) / t_target_ms))
}

/// Throughput penalty: clamp((b_avg - b_target)/b_target, -1, 0).
pub fn embb_reward(b_avg_bps: f64, b_target_bps: f64) -> Result<f64, Error> {
    if b_target_bps <= 0.0 {
        return Err(Error::InvalidArgument("b_target must be positive".into()));
    }
    Ok(clip_unit((b_avg_bps - b_target_bps) / b_target_bps))
}

/// Delivery penalty: clamp((received - expected)/expected, -1, 0), defined
/// as 0 when nothing was expected in the window.
pub fn mmtc_reward(b_received_bytes: f64, b_expected_bytes: f64) -> f64 {
    if b_expected_bytes <= 0.0 {
        return 0.0;
    }
    clip_unit((b_received_bytes - b_expected_bytes) / b_expected_bytes)
}

/// Weighted sum of the three sub-rewards.
pub fn total_reward(r_urllc: f64, r_embb: f64, r_mmtc: f64, weights: &RewardWeights) -> RewardBreakdown {
    RewardBreakdown {
        urllc: r_urllc,
        embb: r_embb,
        mmtc: r_mmtc,
        total: weights.urllc * r_urllc + weights.embb * r_embb + weights.mmtc * r_mmtc,
    }
}
