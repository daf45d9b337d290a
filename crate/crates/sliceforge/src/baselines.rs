//! The four non-learning allocators: equal split, demand-proportional,
//! pre-allocated proportional, and 3GPP-style proportional fair. All of
//! them operate per-UE over the active set.

use crate::error::Error;
use crate::scheduler::largest_remainder;
use crate::traffic::TrafficGenSpec;
use std::collections::BTreeMap;

/// Offered load of one UE in bits/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemandEstimate {
    pub ue_id: u32,
    pub demand_bps: f64,
}

/// Demand per the fixed generation model: periodic kinds contribute
/// frequency times mean packet size (in bits), bitrate kinds their
/// requested rate.
pub fn demand_of(
    ue_id: u32,
    spec: &TrafficGenSpec,
    requested_bitrate_bps: Option<f64>,
) -> DemandEstimate {
    let demand_bps = match *spec {
        TrafficGenSpec::Periodic { gen_freq_hz, bytes_min, bytes_max, .. } => {
            gen_freq_hz * (bytes_min + bytes_max) as f64 / 2.0 * 8.0
        }
        TrafficGenSpec::Bitrate { bitrate_min_bps, bitrate_max_bps } => requested_bitrate_bps
            .unwrap_or((bitrate_min_bps + bitrate_max_bps) / 2.0),
    };
    DemandEstimate { ue_id, demand_bps }
}

/// Integer-division equal split; remainder PRBs stay idle.
pub fn equal_allocation(active_ues: &[u32], total_prbs: u32) -> Vec<(u32, u32)> {
    debug_assert!(!active_ues.is_empty());
    let share = total_prbs / active_ues.len() as u32;
    active_ues.iter().map(|&id| (id, share)).collect()
}

/// Largest-remainder apportionment by demand share; zero total demand
/// falls back to the equal split.
pub fn proportional_allocation(demands: &[DemandEstimate], total_prbs: u32) -> Vec<(u32, u32)> {
    let total_demand: f64 = demands.iter().map(|d| d.demand_bps).sum();
    if total_demand <= 0.0 {
        let ids: Vec<u32> = demands.iter().map(|d| d.ue_id).collect();
        return equal_allocation(&ids, total_prbs);
    }
    let weights: Vec<f64> = demands.iter().map(|d| d.demand_bps).collect();
    let counts = largest_remainder(&weights, total_prbs);
    demands.iter().zip(counts).map(|(d, c)| (d.ue_id, c)).collect()
}

/// One guaranteed PRB each, then proportional over the rest.
pub fn preallocated_proportional(
    demands: &[DemandEstimate],
    total_prbs: u32,
) -> Result<Vec<(u32, u32)>, Error> {
    let n = demands.len() as u32;
    if total_prbs < n {
        return Err(Error::InvalidArgument(format!(
            "pre-allocated baseline needs at least {n} PRBs, got {total_prbs}"
        )));
    }
    let mut out = proportional_allocation(demands, total_prbs - n);
    for grant in &mut out {
        grant.1 += 1;
    }
    Ok(out)
}

const PF_RATE_FLOOR_BPS: f64 = 1.0;

/// Proportional-fair scheduler state: per-UE exponentially averaged
/// achieved rate with time constant `tc` epochs.
#[derive(Debug, Clone)]
pub struct PfState {
    avg_rate_bps: BTreeMap<u32, f64>,
    pub tc_epochs: f64,
}

impl Default for PfState {
    fn default() -> Self {
        PfState { avg_rate_bps: BTreeMap::new(), tc_epochs: 20.0 }
    }
}

impl PfState {
    pub fn new(tc_epochs: f64) -> Self {
        PfState { avg_rate_bps: BTreeMap::new(), tc_epochs }
    }

    pub fn avg_rate(&self, ue_id: u32) -> Option<f64> {
        self.avg_rate_bps.get(&ue_id).copied()
    }

    /// Fold this epoch's achieved rate into the average, floored so a
    /// starved UE's metric can recover.
    pub fn update(&mut self, ue_id: u32, achieved_bps: f64) {
        let prev = self.avg_rate_bps.get(&ue_id).copied().unwrap_or(PF_RATE_FLOOR_BPS);
        let alpha = 1.0 / self.tc_epochs;
        let next = ((1.0 - alpha) * prev + alpha * achieved_bps).max(PF_RATE_FLOOR_BPS);
        self.avg_rate_bps.insert(ue_id, next);
    }
}

/// PF apportionment: metric r_k / avg_k over instantaneous per-PRB rates,
/// PRBs split largest-remainder over metric shares. Unseen UEs warm-start
/// with avg = r_k, giving a unit metric.
pub fn pf_allocation(
    instant_rates: &[(u32, f64)],
    pf: &mut PfState,
    total_prbs: u32,
) -> Vec<(u32, u32)> {
    let metrics: Vec<f64> = instant_rates
        .iter()
        .map(|&(id, r)| {
            let avg = match pf.avg_rate(id) {
                Some(a) => a,
                None => {
                    let warm = r.max(PF_RATE_FLOOR_BPS);
                    pf.avg_rate_bps.insert(id, warm);
                    warm
                }
            };
            (r / avg).max(0.0)
        })
        .collect();
    let counts = if metrics.iter().sum::<f64>() > 0.0 {
        largest_remainder(&metrics, total_prbs)
    } else {
        let ids: Vec<u32> = instant_rates.iter().map(|&(id, _)| id).collect();
        return equal_allocation(&ids, total_prbs);
    };
    instant_rates.iter().zip(counts).map(|(&(id, _), c)| (id, c)).collect()
}
