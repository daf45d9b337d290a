//! Core enumerations, scenario configuration, validation, and the
//! deterministic randomness contract shared by every other module.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;

use crate::traffic::TrafficGenSpec;

/// The three slice types, with a stable integer encoding used for one-hot
/// state features and tie-breaking (URLLC=0, eMBB=1, mMTC=2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SliceKind {
    Urllc,
    Embb,
    Mmtc,
}

pub const SLICE_KINDS: [SliceKind; 3] = [SliceKind::Urllc, SliceKind::Embb, SliceKind::Mmtc];

impl SliceKind {
    pub fn index(self) -> usize {
        match self {
            SliceKind::Urllc => 0,
            SliceKind::Embb => 1,
            SliceKind::Mmtc => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<SliceKind> {
        SLICE_KINDS.get(i).copied()
    }
}

impl fmt::Display for SliceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SliceKind::Urllc => "urllc",
            SliceKind::Embb => "embb",
            SliceKind::Mmtc => "mmtc",
        };
        f.write_str(s)
    }
}

/// One UE in the roster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeProfile {
    pub ue_id: u32,
    pub slice: SliceKind,
    /// Speed in km/h; 0 for stationary UEs.
    pub speed_kmh: f64,
    /// Initial distance from the cell in meters.
    pub initial_distance_m: f64,
    pub traffic: TrafficGenSpec,
}

/// Per-slice reward weights (alpha).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    pub urllc: f64,
    pub embb: f64,
    pub mmtc: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights { urllc: 1.0, embb: 1.0, mmtc: 1.0 }
    }
}

impl RewardWeights {
    pub fn get(&self, kind: SliceKind) -> f64 {
        match kind {
            SliceKind::Urllc => self.urllc,
            SliceKind::Embb => self.embb,
            SliceKind::Mmtc => self.mmtc,
        }
    }

    pub fn sum(&self) -> f64 {
        self.urllc + self.embb + self.mmtc
    }
}

pub const DISTANCE_MIN_M: f64 = 500.0;
pub const DISTANCE_MAX_M: f64 = 2000.0;

/// Full experiment description: UE roster, slice parameters, channel
/// constants, control-loop timing, seeds. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// UE roster; an empty roster is resolved to the default 12-UE deployment.
    #[serde(default)]
    pub ues: Vec<UeProfile>,
    #[serde(default = "d_total_prbs")]
    pub total_prbs: u32,
    #[serde(default = "d_carrier_freq")]
    pub carrier_freq_hz: f64,
    #[serde(default = "d_prb_bandwidth")]
    pub prb_bandwidth_hz: f64,
    #[serde(default = "d_tx_power")]
    pub tx_power_dbm: f64,
    #[serde(default = "d_noise_temp")]
    pub noise_temperature_k: f64,
    /// Fraction of Shannon capacity actually delivered, in (0, 1].
    #[serde(default = "d_link_efficiency")]
    pub link_efficiency: f64,
    /// Spectral-efficiency ceiling in bits/s/Hz.
    #[serde(default = "d_se_cap")]
    pub se_cap: f64,
    /// Shared transport capacity across all UEs, bits/s.
    #[serde(default = "d_cell_cap")]
    pub cell_cap_bps: f64,
    #[serde(default = "d_subframe_ms")]
    pub subframe_ms: u64,
    #[serde(default = "d_kpi_period_ms")]
    pub kpi_period_ms: u64,
    #[serde(default = "d_epoch_ms")]
    pub epoch_ms: u64,
    /// Number of UEs transmitting simultaneously.
    #[serde(default = "d_group_size")]
    pub group_size: u32,
    #[serde(default)]
    pub reward_weights: RewardWeights,
    /// URLLC delay threshold in milliseconds.
    #[serde(default = "d_urllc_t_target")]
    pub urllc_t_target_ms: f64,
    #[serde(default)]
    pub seed: u64,
}

fn d_total_prbs() -> u32 {
    52
}
fn d_carrier_freq() -> f64 {
    3.5e9
}
fn d_prb_bandwidth() -> f64 {
    180e3
}
fn d_tx_power() -> f64 {
    30.0
}
fn d_noise_temp() -> f64 {
    290.0
}
fn d_link_efficiency() -> f64 {
    0.75
}
fn d_se_cap() -> f64 {
    7.4
}
fn d_cell_cap() -> f64 {
    28e6
}
fn d_subframe_ms() -> u64 {
    1
}
fn d_kpi_period_ms() -> u64 {
    500
}
fn d_epoch_ms() -> u64 {
    2000
}
fn d_group_size() -> u32 {
    3
}
fn d_urllc_t_target() -> f64 {
    500.0
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        default_scenario()
    }
}

impl ScenarioConfig {
    /// Number of rotation groups; only meaningful on a validated scenario.
    pub fn group_count(&self) -> u32 {
        let n = self.ues.len() as u32;
        if self.group_size == 0 {
            0
        } else {
            n / self.group_size
        }
    }

    /// KPI samples per epoch.
    pub fn samples_per_epoch(&self) -> u64 {
        self.epoch_ms / self.kpi_period_ms
    }

    /// Total downlink bandwidth in Hz.
    pub fn total_bandwidth_hz(&self) -> f64 {
        self.total_prbs as f64 * self.prb_bandwidth_hz
    }

    /// Parse a scenario document, resolving an omitted roster to the default
    /// deployment for the document's seed. Unknown keys are rejected.
    pub fn from_json_str(s: &str) -> Result<ScenarioConfig, serde_json::Error> {
        let mut cfg: ScenarioConfig = serde_json::from_str(s)?;
        if cfg.ues.is_empty() {
            cfg.ues = default_roster(cfg.seed);
        }
        Ok(cfg)
    }
}

/// Default Table-1-style traffic for a slice.
pub fn default_traffic(kind: SliceKind) -> TrafficGenSpec {
    match kind {
        SliceKind::Urllc => TrafficGenSpec::periodic(2.0, 100_000, 300_000),
        SliceKind::Embb => TrafficGenSpec::Bitrate {
            bitrate_min_bps: 2e5,
            bitrate_max_bps: 4e5,
        },
        SliceKind::Mmtc => TrafficGenSpec::periodic(4.0, 25_000, 60_000),
    }
}

/// The default 12-UE roster: 4 URLLC at 40 km/h, 4 eMBB (2 mobile at
/// 40 km/h, 2 stationary), 4 stationary mMTC. Distances come from the
/// "distance" substream, uniform on [500, 2000] m.
pub fn default_roster(seed: u64) -> Vec<UeProfile> {
    let mut ues = Vec::with_capacity(12);
    let mut ue_id = 0u32;
    for kind in SLICE_KINDS {
        for i in 0..4u32 {
            let speed_kmh = match kind {
                SliceKind::Urllc => 40.0,
                SliceKind::Embb => {
                    if i < 2 {
                        40.0
                    } else {
                        0.0
                    }
                }
                SliceKind::Mmtc => 0.0,
            };
            let mut rng = rng_substream(seed, "distance", ue_id as u64);
            let initial_distance_m = rng.uniform(DISTANCE_MIN_M, DISTANCE_MAX_M);
            ues.push(UeProfile {
                ue_id,
                slice: kind,
                speed_kmh,
                initial_distance_m,
                traffic: default_traffic(kind),
            });
            ue_id += 1;
        }
    }
    ues
}

/// Default scenario with seed 0.
pub fn default_scenario() -> ScenarioConfig {
    default_scenario_with_seed(0)
}

pub fn default_scenario_with_seed(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        ues: default_roster(seed),
        total_prbs: d_total_prbs(),
        carrier_freq_hz: d_carrier_freq(),
        prb_bandwidth_hz: d_prb_bandwidth(),
        tx_power_dbm: d_tx_power(),
        noise_temperature_k: d_noise_temp(),
        link_efficiency: d_link_efficiency(),
        se_cap: d_se_cap(),
        cell_cap_bps: d_cell_cap(),
        subframe_ms: d_subframe_ms(),
        kpi_period_ms: d_kpi_period_ms(),
        epoch_ms: d_epoch_ms(),
        group_size: d_group_size(),
        reward_weights: RewardWeights::default(),
        urllc_t_target_ms: d_urllc_t_target(),
        seed,
    }
}

/// Outcome of scenario validation; errors are data, not panics.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            write!(f, "ok")
        } else {
            for v in &self.violations {
                writeln!(f, "- {v}")?;
            }
            Ok(())
        }
    }
}

/// Check every scenario invariant and return the complete violation list.
pub fn validate_scenario(cfg: &ScenarioConfig) -> ValidationReport {
    let mut v = Vec::new();
    if cfg.ues.is_empty() {
        v.push("roster is empty".to_string());
    }
    let mut seen = std::collections::BTreeSet::new();
    for ue in &cfg.ues {
        if !seen.insert(ue.ue_id) {
            v.push(format!("duplicate ue_id {}", ue.ue_id));
        }
        if ue.initial_distance_m < DISTANCE_MIN_M || ue.initial_distance_m > DISTANCE_MAX_M {
            v.push(format!(
                "ue {} initial_distance {} m outside [{}, {}] m",
                ue.ue_id, ue.initial_distance_m, DISTANCE_MIN_M, DISTANCE_MAX_M
            ));
        }
        if ue.speed_kmh < 0.0 {
            v.push(format!("ue {} negative speed", ue.ue_id));
        }
        if let Err(e) = ue.traffic.validate() {
            v.push(format!("ue {} traffic: {e}", ue.ue_id));
        }
    }
    if cfg.subframe_ms == 0 {
        v.push("subframe must be positive".to_string());
    } else if cfg.kpi_period_ms % cfg.subframe_ms != 0 {
        v.push("kpi_period not multiple of subframe".to_string());
    }
    if cfg.kpi_period_ms == 0 {
        v.push("kpi_period must be positive".to_string());
    } else if cfg.epoch_ms % cfg.kpi_period_ms != 0 {
        v.push("epoch not multiple of kpi_period".to_string());
    }
    if cfg.group_size == 0 || cfg.ues.len() as u32 % cfg.group_size != 0 {
        v.push("group_size does not partition roster".to_string());
    } else if cfg.total_prbs < cfg.group_size {
        v.push("total_prbs smaller than active set".to_string());
    }
    if !(cfg.link_efficiency > 0.0 && cfg.link_efficiency <= 1.0) {
        v.push("link_efficiency outside (0, 1]".to_string());
    }
    if cfg.carrier_freq_hz <= 0.0 || cfg.prb_bandwidth_hz <= 0.0 {
        v.push("carrier frequency and PRB bandwidth must be positive".to_string());
    }
    if cfg.se_cap <= 0.0 {
        v.push("se_cap must be positive".to_string());
    }
    if cfg.cell_cap_bps <= 0.0 {
        v.push("cell_cap must be positive".to_string());
    }
    if cfg.noise_temperature_k <= 0.0 {
        v.push("noise temperature must be positive".to_string());
    }
    if cfg.urllc_t_target_ms <= 0.0 {
        v.push("urllc_t_target must be positive".to_string());
    }
    let w = &cfg.reward_weights;
    if w.urllc < 0.0 || w.embb < 0.0 || w.mmtc < 0.0 {
        v.push("reward weights must be nonnegative".to_string());
    }
    ValidationReport { violations: v }
}

/// A named, independent random substream. Identical (seed, label, index)
/// always yields the identical draw sequence; distinct keys never share
/// state. Handles are single-owner.
pub struct RngStream {
    rng: ChaCha12Rng,
}

/// Derive the substream for (seed, label, index).
pub fn rng_substream(seed: u64, label: &str, index: u64) -> RngStream {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update([0xff]);
    hasher.update(label.as_bytes());
    hasher.update([0xff]);
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    RngStream { rng: ChaCha12Rng::from_seed(key) }
}

impl RngStream {
    /// Uniform draw in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.unit() * (hi - lo)
    }

    /// Uniform draw in [0, 1).
    pub fn unit(&mut self) -> f64 {
        // 53 random bits scaled to [0, 1).
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [lo, hi] inclusive.
    pub fn uniform_u64(&mut self, lo: u64, hi: u64) -> u64 {
        debug_assert!(hi >= lo);
        let span = hi - lo + 1;
        lo + self.rng.next_u64() % span
    }

    /// Random sign, +1 or -1.
    pub fn sign(&mut self) -> f64 {
        if self.rng.next_u64() & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        use rand_distr::{Distribution, StandardNormal};
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform index in [0, n).
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.rng.next_u64() % n as u64) as usize
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scenario_is_valid_for_every_seed() {
        for seed in [0u64, 1, 7, 42, u64::MAX] {
            let cfg = default_scenario_with_seed(seed);
            let report = validate_scenario(&cfg);
            assert!(report.is_ok(), "seed {seed}: {report}");
        }
    }

    #[test]
    fn epoch_must_be_multiple_of_kpi_period() {
        let mut cfg = default_scenario();
        cfg.epoch_ms = 1700;
        let report = validate_scenario(&cfg);
        assert!(report
            .violations
            .iter()
            .any(|v| v.contains("epoch not multiple of kpi_period")));
    }

    #[test]
    fn group_size_must_partition_roster() {
        let mut cfg = default_scenario();
        cfg.group_size = 5;
        let report = validate_scenario(&cfg);
        assert!(report
            .violations
            .iter()
            .any(|v| v.contains("group_size does not partition roster")));
    }

    #[test]
    fn default_roster_matches_task_spec() {
        let cfg = default_scenario();
        assert_eq!(cfg.ues.len(), 12);
        for kind in SLICE_KINDS {
            assert_eq!(cfg.ues.iter().filter(|u| u.slice == kind).count(), 4);
        }
        let urllc = &cfg.ues[0];
        assert_eq!(urllc.slice, SliceKind::Urllc);
        assert_eq!(urllc.speed_kmh, 40.0);
        match urllc.traffic {
            TrafficGenSpec::Periodic { gen_freq_hz, bytes_min, bytes_max, .. } => {
                assert_eq!(gen_freq_hz, 2.0);
                assert_eq!(bytes_min, 100_000);
                assert_eq!(bytes_max, 300_000);
            }
            _ => panic!("urllc traffic must be periodic"),
        }
        assert_eq!(cfg.urllc_t_target_ms, 500.0);
        let mmtc = cfg.ues.iter().find(|u| u.slice == SliceKind::Mmtc).unwrap();
        assert_eq!(mmtc.speed_kmh, 0.0);
        match mmtc.traffic {
            TrafficGenSpec::Periodic { gen_freq_hz, bytes_min, bytes_max, .. } => {
                assert_eq!(gen_freq_hz, 4.0);
                assert_eq!(bytes_min, 25_000);
                assert_eq!(bytes_max, 60_000);
            }
            _ => panic!("mmtc traffic must be periodic"),
        }
        let embb: Vec<_> = cfg.ues.iter().filter(|u| u.slice == SliceKind::Embb).collect();
        assert_eq!(embb.iter().filter(|u| u.speed_kmh == 40.0).count(), 2);
        assert_eq!(embb.iter().filter(|u| u.speed_kmh == 0.0).count(), 2);
        for ue in &embb {
            match ue.traffic {
                TrafficGenSpec::Bitrate { bitrate_min_bps, bitrate_max_bps } => {
                    assert_eq!(bitrate_min_bps, 2e5);
                    assert_eq!(bitrate_max_bps, 4e5);
                }
                _ => panic!("embb traffic must be bitrate"),
            }
        }
        for ue in &cfg.ues {
            assert!(ue.initial_distance_m >= DISTANCE_MIN_M);
            assert!(ue.initial_distance_m <= DISTANCE_MAX_M);
        }
    }

    #[test]
    fn substream_is_deterministic() {
        let a: Vec<f64> = {
            let mut r = rng_substream(7, "distance", 0);
            (0..32).map(|_| r.unit()).collect()
        };
        let b: Vec<f64> = {
            let mut r = rng_substream(7, "distance", 0);
            (0..32).map(|_| r.unit()).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn substreams_differ_across_index_and_seed() {
        let mut a = rng_substream(7, "distance", 0);
        let mut b = rng_substream(7, "distance", 1);
        assert_ne!(a.unit(), b.unit());
        let mut c = rng_substream(7, "traffic", 0);
        let mut d = rng_substream(8, "traffic", 0);
        assert_ne!(c.unit(), d.unit());
    }

    #[test]
    fn substreams_are_statistically_independent() {
        // Pearson correlation between sibling substreams over 1e4 draws.
        let n = 10_000;
        let mut a = rng_substream(7, "distance", 0);
        let mut b = rng_substream(7, "distance", 1);
        let xs: Vec<f64> = (0..n).map(|_| a.unit()).collect();
        let ys: Vec<f64> = (0..n).map(|_| b.unit()).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (mx, my) = (mean(&xs), mean(&ys));
        let mut cov = 0.0;
        let mut vx = 0.0;
        let mut vy = 0.0;
        for i in 0..n {
            cov += (xs[i] - mx) * (ys[i] - my);
            vx += (xs[i] - mx).powi(2);
            vy += (ys[i] - my).powi(2);
        }
        let rho = cov / (vx.sqrt() * vy.sqrt());
        assert!(rho.abs() < 0.05, "correlation {rho}");
    }

    #[test]
    fn scenario_round_trips_through_json() {
        let cfg = default_scenario_with_seed(3);
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back = ScenarioConfig::from_json_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ScenarioConfig::from_json_str(r#"{"seed": 1, "bogus_key": 2}"#);
        assert!(err.is_err());
    }

    #[test]
    fn omitted_roster_resolves_to_default_for_seed() {
        let cfg = ScenarioConfig::from_json_str(r#"{"seed": 5}"#).unwrap();
        assert_eq!(cfg.ues, default_roster(5));
        assert!(validate_scenario(&cfg).is_ok());
    }
}
