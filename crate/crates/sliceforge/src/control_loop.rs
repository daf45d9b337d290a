//! The closed loop: apply an allocation, tick millisecond subframes,
//! sample KPIs every KPI period, average them per epoch, compute rewards,
//! and stream newline-delimited JSON reports. Policies (baselines or
//! agents) plug in at the epoch boundary, mirroring an allocation-in /
//! KPI-out control interface.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::agents::{build_state, Agent, StateVector, UeStateInput, UpdateStats};
use crate::baselines::{
    demand_of, equal_allocation, pf_allocation, preallocated_proportional,
    proportional_allocation, DemandEstimate, PfState,
};
use crate::channel::{init_channel, update_channel, ChannelState};
use crate::domain::{
    rng_substream, validate_scenario, RngStream, ScenarioConfig, SliceKind, SLICE_KINDS,
};
use crate::error::Error;
use crate::rewards::{embb_reward, mmtc_reward, total_reward, urllc_reward, RewardBreakdown};
use crate::scheduler::{
    rotate_active_set, serve_subframe, slice_to_ue_prbs, ActiveSet, PrbAllocation, UeService,
};
use crate::traffic::{draw_requested_bitrate, generate_arrivals, DownlinkBuffer, TrafficGenSpec};

/// Episode length in epochs; the MDP is continuing, done flags only mark
/// these boundaries (and eMBB redraws its requested bitrate).
pub const EPISODE_LEN_EPOCHS: u64 = 64;

/// One KPI measurement for one UE, taken every `kpi_period_ms`.
#[derive(Debug, Clone, PartialEq)]
pub struct KpiSample {
    pub t_ms: u64,
    pub ue_id: u32,
    pub slice: SliceKind,
    pub dl_bitrate_bps: f64,
    pub buffer_occupancy_bytes: u64,
    pub t_avg_ms: f64,
    pub completed_latencies_ms: Vec<f64>,
    pub prbs: u32,
    pub link_loss_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocRecord {
    pub urllc: u32,
    pub embb: u32,
    pub mmtc: u32,
    pub per_ue: BTreeMap<u32, u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UrllcKpi {
    pub t_avg_ms: f64,
    /// Completed-packet latencies for per-packet CDFs; omitted when empty
    /// or when latency sampling is disabled.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub latencies_ms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbbKpi {
    pub b_avg_bps: f64,
    pub b_target_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmtcKpi {
    pub b_received_bytes: u64,
    pub b_expected_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiRecord {
    pub urllc: UrllcKpi,
    pub embb: EmbbKpi,
    pub mmtc: MmtcKpi,
}

/// One epoch of the KPI log; also the unit of the RL transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub v: u32,
    pub epoch: u64,
    pub active_ues: Vec<u32>,
    pub alloc: AllocRecord,
    pub kpi: KpiRecord,
    pub reward: RewardBreakdown,
    /// Simulated wall time at epoch end, ms.
    pub t_ms: u64,
}

/// First line of every KPI log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub v: u32,
    pub log: String,
    pub policy: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTraceRow {
    pub epoch: u64,
    pub ue_id: u32,
    pub distance_m: f64,
    pub pathloss_db: f64,
    pub snr_db: f64,
    pub per_prb_rate_bps: f64,
}

/// Mutable simulation state: channels, buffers, clocks and their RNG
/// substreams. One world, one thread.
pub struct World {
    pub cfg: ScenarioConfig,
    pub epoch_index: u64,
    channels: Vec<ChannelState>,
    buffers: Vec<DownlinkBuffer>,
    requested_bps: Vec<Option<f64>>,
    chan_rngs: Vec<RngStream>,
    traffic_rngs: Vec<RngStream>,
    carries: Vec<f64>,
    episode_len: u64,
    /// KPI samples of the most recent epoch, for inspection.
    pub last_epoch_samples: Vec<KpiSample>,
    /// (ue_id, bytes served) over the most recent epoch.
    pub last_epoch_served: Vec<(u32, u64)>,
    /// Record completed-packet latencies into the log.
    pub log_latencies: bool,
}

impl World {
    pub fn new(cfg: &ScenarioConfig) -> Result<World, Error> {
        Self::with_episode_len(cfg, EPISODE_LEN_EPOCHS)
    }

    pub fn with_episode_len(cfg: &ScenarioConfig, episode_len: u64) -> Result<World, Error> {
        let report = validate_scenario(cfg);
        if !report.is_ok() {
            return Err(Error::InvalidScenario(report));
        }
        let channels = cfg.ues.iter().map(|u| init_channel(u, cfg)).collect();
        let chan_rngs = cfg
            .ues
            .iter()
            .map(|u| rng_substream(cfg.seed, "channel", u.ue_id as u64))
            .collect();
        let mut traffic_rngs: Vec<RngStream> = cfg
            .ues
            .iter()
            .map(|u| rng_substream(cfg.seed, "traffic", u.ue_id as u64))
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
        Ok(World {
            cfg: cfg.clone(),
            epoch_index: 0,
            channels,
            buffers: cfg.ues.iter().map(|_| DownlinkBuffer::new()).collect(),
            requested_bps,
            chan_rngs,
            traffic_rngs,
            carries: vec![0.0; cfg.ues.len()],
            episode_len,
            last_epoch_samples: Vec::new(),
            last_epoch_served: Vec::new(),
            log_latencies: true,
        })
    }

    pub fn episode_len(&self) -> u64 {
        self.episode_len
    }

    pub fn active_set(&self) -> ActiveSet {
        rotate_active_set(&self.cfg, self.epoch_index)
    }

    pub fn channels(&self) -> &[ChannelState] {
        &self.channels
    }

    pub fn buffer(&self, roster_idx: usize) -> &DownlinkBuffer {
        &self.buffers[roster_idx]
    }

    pub fn requested_bitrate(&self, roster_idx: usize) -> Option<f64> {
        self.requested_bps[roster_idx]
    }

    pub fn roster_index(&self, ue_id: u32) -> usize {
        self.cfg
            .ues
            .iter()
            .position(|u| u.ue_id == ue_id)
            .expect("active UE appears in roster")
    }

    /// RL state for the current active set: one-hot slice, demand (buffer
    /// occupancy in bits, or the requested bitrate for eMBB) and link loss.
    pub fn state(&self) -> Result<StateVector, Error> {
        let active = self.active_set();
        let mut inputs: Vec<UeStateInput> = active
            .ue_ids
            .iter()
            .map(|&id| {
                let i = self.roster_index(id);
                let ue = &self.cfg.ues[i];
                let demand_bits = match ue.traffic {
                    TrafficGenSpec::Bitrate { .. } => self.requested_bps[i].unwrap_or(0.0),
                    TrafficGenSpec::Periodic { .. } => {
                        self.buffers[i].occupancy_bytes() as f64 * 8.0
                    }
                };
                UeStateInput {
                    slice: ue.slice,
                    demand_bits,
                    link_loss_db: self.channels[i].link_loss_db(),
                }
            })
            .collect();
        inputs.sort_by_key(|u| u.slice.index());
        let slices: Vec<usize> = inputs.iter().map(|u| u.slice.index()).collect();
        if slices != [0, 1, 2] {
            return Err(Error::InvalidArgument(
                "RL policies need an active set of one UE per slice".into(),
            ));
        }
        Ok(build_state(&[inputs[0], inputs[1], inputs[2]]))
    }

    /// Expand a slice-level decision into per-UE grants: even split within
    /// the slice, remainder to the higher combined link loss.
    pub fn slice_decision_to_alloc(&self, slice_prbs: [u32; 3]) -> PrbAllocation {
        let active = self.active_set();
        let mut grants: Vec<(u32, SliceKind, u32)> = Vec::new();
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
                grants.push((id, kind, prbs));
            }
        }
        PrbAllocation::from_per_ue(&grants, self.cfg.total_prbs)
    }

    /// Simulate one epoch under `alloc`: inject due arrivals each
    /// subframe, serve through the scheduler, emit a KPI sample per KPI
    /// period, then average samples into per-slice windows and the reward.
    /// Invariant violations in the allocation are fatal.
    pub fn run_epoch(&mut self, alloc: &PrbAllocation) -> Result<EpochReport, Error> {
        let active = self.active_set();
        alloc.validate(&active)?;
        let cfg = self.cfg.clone();
        let t0 = self.epoch_index * cfg.epoch_ms;
        let t1 = t0 + cfg.epoch_ms;
        let idxs: Vec<usize> = active.ue_ids.iter().map(|&id| self.roster_index(id)).collect();

        // This epoch's arrivals per active UE, on the global phase grid.
        let mut pending: Vec<std::collections::VecDeque<crate::traffic::Packet>> = idxs
            .iter()
            .map(|&i| {
                generate_arrivals(
                    &cfg.ues[i].traffic,
                    (t0 as f64, t1 as f64),
                    cfg.kpi_period_ms,
                    self.requested_bps[i],
                    &mut self.traffic_rngs[i],
                )
                .into()
            })
            .collect();

        let mut samples: Vec<KpiSample> = Vec::new();
        let mut served_totals = vec![0u64; idxs.len()];
        let mut generated_totals = vec![0u64; idxs.len()];

        {
            // Disjoint mutable rows for the active UEs, held across the epoch.
            let channels = &self.channels;
            let buffer_rows: Vec<(usize, &mut DownlinkBuffer)> = self
                .buffers
                .iter_mut()
                .enumerate()
                .filter(|(i, _)| idxs.contains(i))
                .collect();
            let carry_rows: Vec<&mut f64> = self
                .carries
                .iter_mut()
                .enumerate()
                .filter(|(i, _)| idxs.contains(i))
                .map(|(_, c)| c)
                .collect();
            let mut row_roster: Vec<usize> = Vec::with_capacity(idxs.len());
            let mut services: Vec<UeService> = Vec::with_capacity(idxs.len());
            for ((i, buffer), carry) in buffer_rows.into_iter().zip(carry_rows) {
                let ue_id = cfg.ues[i].ue_id;
                row_roster.push(i);
                services.push(UeService {
                    ue_id,
                    prbs: alloc.per_ue.get(&ue_id).copied().unwrap_or(0),
                    per_prb_rate_bps: channels[i].per_prb_rate_bps,
                    buffer,
                    carry,
                });
            }
            // Position of each service row in the active-order `idxs`.
            let k_of: Vec<usize> = row_roster
                .iter()
                .map(|i| idxs.iter().position(|j| j == i).unwrap())
                .collect();

            for w in 0..cfg.samples_per_epoch() {
                let w_end = t0 + (w + 1) * cfg.kpi_period_ms;
                let mut t = t0 + w * cfg.kpi_period_ms;
                while t < w_end {
                    let now = t as f64;
                    for (row, &k) in services.iter_mut().zip(&k_of) {
                        while pending[k]
                            .front()
                            .is_some_and(|p| p.enqueue_ms < now + cfg.subframe_ms as f64)
                        {
                            row.buffer.enqueue(pending[k].pop_front().unwrap());
                        }
                    }
                    let served = serve_subframe(&mut services, &cfg, now);
                    for (j, bytes) in served.iter().enumerate() {
                        served_totals[k_of[j]] += bytes;
                    }
                    t += cfg.subframe_ms;
                }
                for (j, row) in services.iter_mut().enumerate() {
                    let i = row_roster[j];
                    let ue = &cfg.ues[i];
                    let stats = row.buffer.window_stats(w_end as f64);
                    generated_totals[k_of[j]] += stats.bytes_generated;
                    samples.push(KpiSample {
                        t_ms: w_end,
                        ue_id: ue.ue_id,
                        slice: ue.slice,
                        dl_bitrate_bps: stats.bytes_served as f64 * 8.0 * 1000.0
                            / cfg.kpi_period_ms as f64,
                        buffer_occupancy_bytes: stats.occupancy_bytes,
                        t_avg_ms: stats.t_avg_ms,
                        completed_latencies_ms: stats.completed_latencies_ms,
                        prbs: row.prbs,
                        link_loss_db: channels[i].link_loss_db(),
                    });
                }
            }
        }

        let report = self.summarize_epoch(
            &active,
            alloc,
            &samples,
            &idxs,
            &served_totals,
            &generated_totals,
            t1,
        )?;
        self.last_epoch_served = idxs
            .iter()
            .zip(&served_totals)
            .map(|(&i, &b)| (cfg.ues[i].ue_id, b))
            .collect();
        self.last_epoch_samples = samples;

        // Advance: channel walk for every UE, episode-boundary redraws.
        self.epoch_index += 1;
        for i in 0..cfg.ues.len() {
            self.channels[i] =
                update_channel(&cfg.ues[i], &self.channels[i], &cfg, &mut self.chan_rngs[i]);
        }
        if self.epoch_index % self.episode_len == 0 {
            for i in 0..cfg.ues.len() {
                if let TrafficGenSpec::Bitrate { .. } = cfg.ues[i].traffic {
                    self.requested_bps[i] = Some(draw_requested_bitrate(
                        &cfg.ues[i].traffic,
                        cfg.kpi_period_ms,
                        &mut self.traffic_rngs[i],
                    ));
                }
            }
        }
        Ok(report)
    }

    #[allow(clippy::too_many_arguments)]
    fn summarize_epoch(
        &self,
        active: &ActiveSet,
        alloc: &PrbAllocation,
        samples: &[KpiSample],
        idxs: &[usize],
        served_totals: &[u64],
        generated_totals: &[u64],
        t_end_ms: u64,
    ) -> Result<EpochReport, Error> {
        let cfg = &self.cfg;
        let mut t_sum = 0.0;
        let mut t_n = 0u64;
        let mut latencies = Vec::new();
        let mut embb_rate_sum = 0.0;
        for s in samples {
            match s.slice {
                SliceKind::Urllc => {
                    t_sum += s.t_avg_ms;
                    t_n += 1;
                    latencies.extend_from_slice(&s.completed_latencies_ms);
                }
                SliceKind::Embb => embb_rate_sum += s.dl_bitrate_bps,
                SliceKind::Mmtc => {}
            }
        }
        let mut b_target = 0.0;
        let mut received = 0u64;
        let mut expected = 0u64;
        for (pos, &i) in idxs.iter().enumerate() {
            match cfg.ues[i].slice {
                SliceKind::Embb => b_target += self.requested_bps[i].unwrap_or(0.0),
                SliceKind::Mmtc => {
                    received += served_totals[pos];
                    expected += generated_totals[pos];
                }
                SliceKind::Urllc => {}
            }
        }
        let t_avg = if t_n > 0 { t_sum / t_n as f64 } else { 0.0 };
        let b_avg = embb_rate_sum / cfg.samples_per_epoch() as f64;

        let r_urllc =
            if t_n > 0 { urllc_reward(t_avg, cfg.urllc_t_target_ms)? } else { 0.0 };
        let r_embb = if b_target > 0.0 { embb_reward(b_avg, b_target)? } else { 0.0 };
        let r_mmtc = mmtc_reward(received as f64, expected as f64);
        let reward = total_reward(r_urllc, r_embb, r_mmtc, &cfg.reward_weights);

        Ok(EpochReport {
            v: 1,
            epoch: active.epoch_index,
            active_ues: active.ue_ids.clone(),
            alloc: AllocRecord {
                urllc: alloc.urllc,
                embb: alloc.embb,
                mmtc: alloc.mmtc,
                per_ue: alloc.per_ue.clone(),
            },
            kpi: KpiRecord {
                urllc: UrllcKpi {
                    t_avg_ms: t_avg,
                    latencies_ms: if self.log_latencies { latencies } else { Vec::new() },
                },
                embb: EmbbKpi { b_avg_bps: b_avg, b_target_bps: b_target },
                mmtc: MmtcKpi { b_received_bytes: received, b_expected_bytes: expected },
            },
            reward,
            t_ms: t_end_ms,
        })
    }

    /// Conservation counters per roster index: (generated, served, occupancy).
    pub fn conservation_counters(&self, roster_idx: usize) -> (u64, u64, u64) {
        let b = &self.buffers[roster_idx];
        (b.total_generated, b.total_served, b.occupancy_bytes())
    }
}

/// Allocation policy driving the loop.
pub enum Policy {
    Equal,
    Proportional,
    Preallocated,
    Pf(PfState),
    Rl { agent: Agent, train: bool },
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Equal => "equal",
            Policy::Proportional => "prop",
            Policy::Preallocated => "prealloc",
            Policy::Pf(_) => "pf",
            Policy::Rl { agent, .. } => match agent {
                Agent::Ppo(_) => "ppo",
                Agent::Dqn(_) => "dqn",
            },
        }
    }
}

/// Everything a run produces in memory.
pub struct RunOutcome {
    pub reports: Vec<EpochReport>,
    pub update_stats: Vec<UpdateStats>,
    pub channel_trace: Vec<ChannelTraceRow>,
}

/// Drive `policy` through `epochs` control epochs.
pub fn run(
    policy: &mut Policy,
    world: &mut World,
    epochs: u64,
    rng: &mut RngStream,
    trace_channel: bool,
) -> Result<RunOutcome, Error> {
    let mut outcome = RunOutcome {
        reports: Vec::with_capacity(epochs as usize),
        update_stats: Vec::new(),
        channel_trace: Vec::new(),
    };
    for _ in 0..epochs {
        if trace_channel {
            for ch in world.channels() {
                outcome.channel_trace.push(ChannelTraceRow {
                    epoch: world.epoch_index,
                    ue_id: ch.ue_id,
                    distance_m: ch.distance_m,
                    pathloss_db: ch.pathloss_db,
                    snr_db: ch.snr_db,
                    per_prb_rate_bps: ch.per_prb_rate_bps,
                });
            }
        }
        let active = world.active_set();
        let (alloc, rl_context) = decide(policy, world, &active, rng)?;
        let report = world.run_epoch(&alloc)?;

        match policy {
            Policy::Pf(pf) => {
                let dt_s = world.cfg.epoch_ms as f64 / 1000.0;
                for &(id, bytes) in &world.last_epoch_served {
                    pf.update(id, bytes as f64 * 8.0 / dt_s);
                }
            }
            Policy::Rl { agent, train } if *train => {
                let (state, info) = rl_context.expect("training decision carries context");
                let done = world.epoch_index % world.episode_len() == 0;
                let next_state = world.state()?;
                if let Some(stats) =
                    agent.record(state, info, report.reward.total, done, &next_state, rng)?
                {
                    outcome.update_stats.push(stats);
                }
            }
            _ => {}
        }
        outcome.reports.push(report);
    }
    Ok(outcome)
}

type RlContext = Option<(StateVector, crate::agents::ActionInfo)>;

fn decide(
    policy: &mut Policy,
    world: &World,
    active: &ActiveSet,
    rng: &mut RngStream,
) -> Result<(PrbAllocation, RlContext), Error> {
    let cfg = &world.cfg;
    let grants_of = |pairs: Vec<(u32, u32)>| -> PrbAllocation {
        let grants: Vec<(u32, SliceKind, u32)> = pairs
            .into_iter()
            .map(|(id, prbs)| (id, cfg.ues[world.roster_index(id)].slice, prbs))
            .collect();
        PrbAllocation::from_per_ue(&grants, cfg.total_prbs)
    };
    match policy {
        Policy::Equal => Ok((grants_of(equal_allocation(&active.ue_ids, cfg.total_prbs)), None)),
        Policy::Proportional => {
            let demands = active_demands(world, active);
            Ok((grants_of(proportional_allocation(&demands, cfg.total_prbs)), None))
        }
        Policy::Preallocated => {
            let demands = active_demands(world, active);
            Ok((grants_of(preallocated_proportional(&demands, cfg.total_prbs)?), None))
        }
        Policy::Pf(pf) => {
            let rates: Vec<(u32, f64)> = active
                .ue_ids
                .iter()
                .map(|&id| {
                    let i = world.roster_index(id);
                    (id, world.channels()[i].per_prb_rate_bps)
                })
                .collect();
            Ok((grants_of(pf_allocation(&rates, pf, cfg.total_prbs)), None))
        }
        Policy::Rl { agent, train } => {
            let state = world.state()?;
            let decision = agent.decide(&state, cfg.total_prbs, rng, !*train)?;
            let alloc = world.slice_decision_to_alloc(decision.slice_prbs);
            let ctx = if *train { Some((state, decision.info)) } else { None };
            Ok((alloc, ctx))
        }
    }
}

fn active_demands(world: &World, active: &ActiveSet) -> Vec<DemandEstimate> {
    active
        .ue_ids
        .iter()
        .map(|&id| {
            let i = world.roster_index(id);
            demand_of(id, &world.cfg.ues[i].traffic, world.requested_bitrate(i))
        })
        .collect()
}

/// Write header plus one report per line as newline-delimited JSON.
pub fn write_kpi_log(header: &LogHeader, reports: &[EpochReport], path: &Path) -> Result<(), Error> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let head = serde_json::to_string(header).map_err(|e| Error::json(path, e))?;
    writeln!(w, "{head}").map_err(|e| Error::io(path, e))?;
    for r in reports {
        let line = serde_json::to_string(r).map_err(|e| Error::json(path, e))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// A log line that failed to parse.
#[derive(Debug, Clone)]
pub struct MalformedLine {
    pub line_number: usize,
    pub message: String,
}

/// Read a KPI log; malformed report lines are collected with their line
/// numbers and parsing continues.
pub fn read_kpi_log(
    path: &Path,
) -> Result<(LogHeader, Vec<EpochReport>, Vec<MalformedLine>), Error> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut lines = reader.lines().enumerate();
    let header: LogHeader = match lines.next() {
        Some((_, Ok(first))) => serde_json::from_str(&first).map_err(|e| Error::json(path, e))?,
        Some((_, Err(e))) => return Err(Error::io(path, e)),
        None => return Err(Error::InvalidArgument(format!("{}: empty KPI log", path.display()))),
    };
    let mut reports = Vec::new();
    let mut malformed = Vec::new();
    for (idx, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<EpochReport>(&line) {
            Ok(r) => reports.push(r),
            Err(e) => {
                malformed.push(MalformedLine { line_number: idx + 1, message: e.to_string() })
            }
        }
    }
    Ok((header, reports, malformed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{default_scenario, default_scenario_with_seed, default_traffic};
    use crate::scheduler::PrbAllocation;

    fn zero_alloc(world: &World) -> PrbAllocation {
        world.slice_decision_to_alloc([0, 0, 0])
    }

    #[test]
    fn starved_urllc_drives_reward_to_floor() {
        let cfg = default_scenario();
        let mut world = World::new(&cfg).unwrap();
        let alloc = zero_alloc(&world);
        let report = world.run_epoch(&alloc).unwrap();
        // Nothing was served and the oldest packet aged past the target.
        assert_eq!(report.kpi.mmtc.b_received_bytes, 0);
        assert!(report.kpi.urllc.t_avg_ms > 500.0);
        assert_eq!(report.reward.urllc, -1.0);
        assert_eq!(report.reward.embb, -1.0);
        assert_eq!(report.reward.mmtc, -1.0);
    }

    #[test]
    fn ample_allocation_meets_embb_target() {
        // A single eMBB UE with the full grid comfortably hits its target.
        let mut cfg = default_scenario();
        cfg.ues = vec![crate::domain::UeProfile {
            ue_id: 0,
            slice: SliceKind::Embb,
            speed_kmh: 0.0,
            initial_distance_m: 800.0,
            traffic: default_traffic(SliceKind::Embb),
        }];
        cfg.group_size = 1;
        let mut world = World::new(&cfg).unwrap();
        let alloc = world.slice_decision_to_alloc([0, 52, 0]);
        let report = world.run_epoch(&alloc).unwrap();
        assert_eq!(report.reward.embb, 0.0);
        assert_eq!(report.kpi.embb.b_avg_bps, report.kpi.embb.b_target_bps);
    }

    #[test]
    fn four_samples_per_ue_per_epoch() {
        let cfg = default_scenario();
        let mut world = World::new(&cfg).unwrap();
        let alloc = world.slice_decision_to_alloc([18, 17, 17]);
        world.run_epoch(&alloc).unwrap();
        assert_eq!(world.last_epoch_samples.len(), 3 * 4);
        for id in world.active_set().ue_ids {
            // epoch already advanced; previous active set was epoch 0
            let n = world.last_epoch_samples.iter().filter(|s| s.ue_id == id).count();
            assert!(n == 4 || n == 0);
        }
    }

    #[test]
    fn conservation_holds_per_epoch() {
        let cfg = default_scenario();
        let mut world = World::new(&cfg).unwrap();
        let mut policy = Policy::Equal;
        let mut rng = rng_substream(cfg.seed, "exploration", 0);
        run(&mut policy, &mut world, 20, &mut rng, false).unwrap();
        for i in 0..cfg.ues.len() {
            let (generated, served, occupancy) = world.conservation_counters(i);
            assert_eq!(generated, served + occupancy, "ue roster idx {i}");
        }
    }

    #[test]
    fn baseline_runs_produce_no_updates() {
        let cfg = default_scenario();
        let mut world = World::new(&cfg).unwrap();
        let mut policy = Policy::Proportional;
        let mut rng = rng_substream(cfg.seed, "exploration", 0);
        let outcome = run(&mut policy, &mut world, 8, &mut rng, false).unwrap();
        assert!(outcome.update_stats.is_empty());
        assert_eq!(outcome.reports.len(), 8);
    }

    #[test]
    fn ppo_updates_fire_at_rollout_boundaries() {
        use crate::agents::{PpoAgent, PpoConfig};
        let cfg = default_scenario_with_seed(1);
        let mut world = World::new(&cfg).unwrap();
        let agent = PpoAgent::new(PpoConfig { rollout_len: 16, ..Default::default() }, cfg.seed);
        let mut policy = Policy::Rl { agent: Agent::Ppo(agent), train: true };
        let mut rng = rng_substream(cfg.seed, "exploration", 0);
        let outcome = run(&mut policy, &mut world, 48, &mut rng, false).unwrap();
        assert_eq!(outcome.update_stats.len(), 3);
    }

    #[test]
    fn evaluation_stream_is_deterministic() {
        let cfg = default_scenario_with_seed(7);
        let run_once = || {
            let mut world = World::new(&cfg).unwrap();
            let mut policy = Policy::Pf(PfState::default());
            let mut rng = rng_substream(cfg.seed, "exploration", 0);
            let outcome = run(&mut policy, &mut world, 12, &mut rng, false).unwrap();
            serde_json::to_string(&outcome.reports).unwrap()
        };
        assert_eq!(run_once(), run_once());
    }

    #[test]
    fn kpi_log_round_trip() {
        let cfg = default_scenario_with_seed(3);
        let mut world = World::new(&cfg).unwrap();
        let mut policy = Policy::Equal;
        let mut rng = rng_substream(cfg.seed, "exploration", 0);
        let outcome = run(&mut policy, &mut world, 10, &mut rng, false).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kpi.ndjson");
        let header =
            LogHeader { v: 1, log: "kpi".into(), policy: "equal".into(), seed: cfg.seed };
        write_kpi_log(&header, &outcome.reports, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 11);
        let (header_back, reports, malformed) = read_kpi_log(&path).unwrap();
        assert_eq!(header_back, header);
        assert!(malformed.is_empty());
        assert_eq!(reports, outcome.reports);
    }

    #[test]
    fn reward_recomputation_matches_log() {
        let cfg = default_scenario_with_seed(5);
        let mut world = World::new(&cfg).unwrap();
        let mut policy = Policy::Proportional;
        let mut rng = rng_substream(cfg.seed, "exploration", 0);
        let outcome = run(&mut policy, &mut world, 12, &mut rng, false).unwrap();
        for r in &outcome.reports {
            let ru = urllc_reward(r.kpi.urllc.t_avg_ms, cfg.urllc_t_target_ms).unwrap();
            let re = if r.kpi.embb.b_target_bps > 0.0 {
                embb_reward(r.kpi.embb.b_avg_bps, r.kpi.embb.b_target_bps).unwrap()
            } else {
                0.0
            };
            let rm = mmtc_reward(
                r.kpi.mmtc.b_received_bytes as f64,
                r.kpi.mmtc.b_expected_bytes as f64,
            );
            let total = total_reward(ru, re, rm, &cfg.reward_weights);
            assert_eq!(total, r.reward);
        }
    }

    #[test]
    fn throughput_stays_under_cell_cap() {
        let cfg = default_scenario();
        let mut world = World::new(&cfg).unwrap();
        let mut policy = Policy::Equal;
        let mut rng = rng_substream(cfg.seed, "exploration", 0);
        let outcome = run(&mut policy, &mut world, 16, &mut rng, false).unwrap();
        let mut cumulative = 0u64;
        for (e, _r) in outcome.reports.iter().enumerate() {
            let _ = e;
        }
        for i in 0..cfg.ues.len() {
            cumulative += world.conservation_counters(i).1;
        }
        let horizon_s = 16.0 * cfg.epoch_ms as f64 / 1000.0;
        assert!(cumulative as f64 * 8.0 <= cfg.cell_cap_bps * horizon_s + 8.0 * 16.0);
    }

    use crate::domain::rng_substream;
}
