//! Lightweight pre-training environment: the same channel walk, rotation
//! and rewards as the full simulator, but KPIs come from a fluid-queue
//! model of allocation-versus-demand instead of subframe simulation. Its
//! random substreams are separate from the online ones, so pre-training
//! never perturbs online realizations.

use crate::baselines::demand_of;
use crate::channel::{init_channel, update_channel, ChannelState};
use crate::domain::{rng_substream, RngStream, ScenarioConfig, SliceKind, SLICE_KINDS};
use crate::error::Error;
use crate::rewards::{embb_reward, mmtc_reward, total_reward, urllc_reward, RewardBreakdown};
use crate::scheduler::{rotate_active_set, scaled_rates, slice_to_ue_prbs};
use crate::traffic::{draw_requested_bitrate, TrafficGenSpec};

use super::{build_state, Agent, StateVector, UeStateInput, UpdateStats};

pub struct SurrogateEnv {
    cfg: ScenarioConfig,
    episode_len: u64,
    channels: Vec<ChannelState>,
    chan_rngs: Vec<RngStream>,
    traffic_rngs: Vec<RngStream>,
    backlog_bits: Vec<f64>,
    requested_bps: Vec<Option<f64>>,
    epoch: u64,
}

fn mean_packet_bits(spec: &TrafficGenSpec) -> f64 {
    match *spec {
        TrafficGenSpec::Periodic { bytes_min, bytes_max, .. } => {
            (bytes_min + bytes_max) as f64 / 2.0 * 8.0
        }
        TrafficGenSpec::Bitrate { .. } => 0.0,
    }
}

/// Typical packet delay under the fluid model: queue ahead plus own
/// service time, blown past the target when nothing is allocated.
fn analytic_latency_ms(
    backlog_bits: f64,
    packet_bits: f64,
    capacity_bps: f64,
    t_target_ms: f64,
) -> f64 {
    if capacity_bps <= 0.0 {
        return 10.0 * t_target_ms;
    }
    1000.0 * (backlog_bits + packet_bits) / capacity_bps
}

impl SurrogateEnv {
    pub fn new(cfg: &ScenarioConfig, episode_len: u64) -> SurrogateEnv {
        let channels = cfg.ues.iter().map(|u| init_channel(u, cfg)).collect();
        let chan_rngs = cfg
            .ues
            .iter()
            .map(|u| rng_substream(cfg.seed, "surrogate-channel", u.ue_id as u64))
            .collect();
        let mut traffic_rngs: Vec<RngStream> = cfg
            .ues
            .iter()
            .map(|u| rng_substream(cfg.seed, "surrogate-traffic", u.ue_id as u64))
            .collect();
        let requested_bps = cfg
            .ues
            .iter()
            .zip(&mut traffic_rngs)
            .map(|(u, rng)| match u.traffic {
                TrafficGenSpec::Bitrate { .. } => {
                    Some(draw_requested_bitrate(&u.traffic, cfg.kpi_period_ms, rng))
                }
                TrafficGenSpec::Periodic { .. } => None,
            })
            .collect();
        SurrogateEnv {
            cfg: cfg.clone(),
            episode_len,
            channels,
            chan_rngs,
            traffic_rngs,
            backlog_bits: vec![0.0; cfg.ues.len()],
            requested_bps,
            epoch: 0,
        }
    }

    pub fn cfg(&self) -> &ScenarioConfig {
        &self.cfg
    }

    fn roster_index(&self, ue_id: u32) -> usize {
        self.cfg.ues.iter().position(|u| u.ue_id == ue_id).expect("active UE in roster")
    }

    /// State for the current epoch's active set; demand features are the
    /// fluid backlog for periodic slices and the requested rate for eMBB.
    pub fn state(&self) -> StateVector {
        let active = rotate_active_set(&self.cfg, self.epoch);
        let mut inputs: Vec<UeStateInput> = active
            .ue_ids
            .iter()
            .map(|&id| {
                let i = self.roster_index(id);
                let ue = &self.cfg.ues[i];
                let demand_bits = match ue.traffic {
                    TrafficGenSpec::Bitrate { .. } => self.requested_bps[i].unwrap_or(0.0),
                    TrafficGenSpec::Periodic { .. } => self.backlog_bits[i],
                };
                UeStateInput {
                    slice: ue.slice,
                    demand_bits,
                    link_loss_db: self.channels[i].link_loss_db(),
                }
            })
            .collect();
        inputs.sort_by_key(|u| u.slice.index());
        assert_eq!(inputs.len(), 3, "RL state needs one active UE per slice");
        build_state(&[inputs[0], inputs[1], inputs[2]])
    }

    /// Apply one slice allocation for one epoch; returns the reward and
    /// whether an episode boundary was crossed.
    pub fn step(&mut self, slice_prbs: [u32; 3]) -> (RewardBreakdown, bool) {
        let active = rotate_active_set(&self.cfg, self.epoch);
        let dt_s = self.cfg.epoch_ms as f64 / 1000.0;

        // Slice grants down to UEs, then the shared cap across all of them.
        let mut grants: Vec<(usize, u32)> = Vec::new();
        for kind in SLICE_KINDS {
            let members: Vec<(u32, f64)> = active
                .ue_ids
                .iter()
                .map(|&id| self.roster_index(id))
                .filter(|&i| self.cfg.ues[i].slice == kind)
                .map(|i| (self.cfg.ues[i].ue_id, self.channels[i].link_loss_db()))
                .collect();
            if members.is_empty() {
                continue;
            }
            for (id, prbs) in slice_to_ue_prbs(slice_prbs[kind.index()], &members) {
                grants.push((self.roster_index(id), prbs));
            }
        }
        let candidates: Vec<f64> = grants
            .iter()
            .map(|&(i, prbs)| prbs as f64 * self.channels[i].per_prb_rate_bps)
            .collect();
        let capacities = scaled_rates(&candidates, self.cfg.cell_cap_bps);

        // Fluid queue per active UE, aggregated into per-slice KPIs.
        let mut t_avg_sum = [0.0; 3];
        let mut t_count = [0u32; 3];
        let mut served_bps = [0.0; 3];
        let mut target_bps = [0.0; 3];
        let mut received_bits = [0.0; 3];
        let mut expected_bits = [0.0; 3];
        for (&(i, _), &capacity) in grants.iter().zip(&capacities) {
            let ue = &self.cfg.ues[i];
            let demand =
                demand_of(ue.ue_id, &ue.traffic, self.requested_bps[i]).demand_bps;
            let arrivals = demand * dt_s;
            let backlog_start = self.backlog_bits[i];
            let served = (backlog_start + arrivals).min(capacity * dt_s);
            self.backlog_bits[i] = backlog_start + arrivals - served;
            let s = ue.slice.index();
            match ue.slice {
                SliceKind::Urllc => {
                    t_avg_sum[s] += analytic_latency_ms(
                        backlog_start,
                        mean_packet_bits(&ue.traffic),
                        capacity,
                        self.cfg.urllc_t_target_ms,
                    );
                    t_count[s] += 1;
                }
                SliceKind::Embb => {
                    served_bps[s] += served / dt_s;
                    target_bps[s] += self.requested_bps[i].unwrap_or(0.0);
                }
                SliceKind::Mmtc => {
                    received_bits[s] += served;
                    expected_bits[s] += arrivals;
                }
            }
        }
        let u = SliceKind::Urllc.index();
        let e = SliceKind::Embb.index();
        let m = SliceKind::Mmtc.index();
        let r_urllc = if t_count[u] > 0 {
            urllc_reward(t_avg_sum[u] / t_count[u] as f64, self.cfg.urllc_t_target_ms)
                .expect("validated t_target")
        } else {
            0.0
        };
        let r_embb = if target_bps[e] > 0.0 {
            embb_reward(served_bps[e], target_bps[e]).expect("positive target")
        } else {
            0.0
        };
        let r_mmtc = mmtc_reward(received_bits[m], expected_bits[m]);
        let reward = total_reward(r_urllc, r_embb, r_mmtc, &self.cfg.reward_weights);

        // Advance to the next epoch.
        self.epoch += 1;
        for i in 0..self.cfg.ues.len() {
            self.channels[i] =
                update_channel(&self.cfg.ues[i], &self.channels[i], &self.cfg, &mut self.chan_rngs[i]);
        }
        let done = self.epoch % self.episode_len == 0;
        if done {
            // Fresh fluid queues each episode so a starved slice's clipped
            // reward cannot pin the whole rollout at the floor.
            self.backlog_bits.iter_mut().for_each(|b| *b = 0.0);
            for i in 0..self.cfg.ues.len() {
                if let TrafficGenSpec::Bitrate { .. } = self.cfg.ues[i].traffic {
                    self.requested_bps[i] = Some(draw_requested_bitrate(
                        &self.cfg.ues[i].traffic,
                        self.cfg.kpi_period_ms,
                        &mut self.traffic_rngs[i],
                    ));
                }
            }
        }
        (reward, done)
    }
}

/// Run the select/store/update cycle against the surrogate for `steps`
/// epochs. Returns the update rows produced along the way.
pub fn pretrain(
    agent: &mut Agent,
    env: &mut SurrogateEnv,
    steps: u64,
    rng: &mut RngStream,
) -> Result<Vec<UpdateStats>, Error> {
    let mut stats = Vec::new();
    for _ in 0..steps {
        let state = env.state();
        let decision = agent.decide(&state, env.cfg.total_prbs, rng, false)?;
        let (reward, done) = env.step(decision.slice_prbs);
        let next = env.state();
        if let Some(s) = agent.record(state, decision.info, reward.total, done, &next, rng)? {
            stats.push(s);
        }
    }
    Ok(stats)
}

/// Mean per-epoch reward of the deterministic policy over `epochs` steps.
pub fn evaluate_mean_reward(
    agent: &mut Agent,
    env: &mut SurrogateEnv,
    epochs: u64,
    rng: &mut RngStream,
) -> Result<f64, Error> {
    let mut sum = 0.0;
    for _ in 0..epochs {
        let state = env.state();
        let decision = agent.decide(&state, env.cfg.total_prbs, rng, true)?;
        let (reward, _) = env.step(decision.slice_prbs);
        sum += reward.total;
    }
    Ok(sum / epochs as f64)
}
