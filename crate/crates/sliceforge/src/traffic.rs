//! Downlink traffic generation and per-UE buffer/latency accounting.
//!
//! URLLC and mMTC traffic is periodic with random packet sizes; eMBB is a
//! constant-bitrate flow materialized as one packet per KPI period. Buffers
//! are plain FIFO queues with byte-exact conservation accounting.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::domain::RngStream;

/// Traffic generator parameters for one UE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrafficGenSpec {
    /// Packets at a fixed rate with sizes uniform in [bytes_min, bytes_max].
    /// `jitter` (default 0) delays each arrival by up to that fraction of
    /// the period past its grid instant.
    Periodic {
        gen_freq_hz: f64,
        bytes_min: u64,
        bytes_max: u64,
        #[serde(default)]
        jitter: f64,
    },
    /// Constant bitrate requested per episode, uniform in [min, max] bits/s.
    Bitrate { bitrate_min_bps: f64, bitrate_max_bps: f64 },
}

impl TrafficGenSpec {
    pub fn periodic(gen_freq_hz: f64, bytes_min: u64, bytes_max: u64) -> TrafficGenSpec {
        TrafficGenSpec::Periodic { gen_freq_hz, bytes_min, bytes_max, jitter: 0.0 }
    }

    pub fn validate(&self) -> Result<(), String> {
        match *self {
            TrafficGenSpec::Periodic { gen_freq_hz, bytes_min, bytes_max, jitter } => {
                if gen_freq_hz <= 0.0 {
                    return Err("generation frequency must be positive".into());
                }
                if bytes_min > bytes_max {
                    return Err("bytes_min exceeds bytes_max".into());
                }
                if !(0.0..1.0).contains(&jitter) {
                    return Err("jitter must lie in [0, 1)".into());
                }
                Ok(())
            }
            TrafficGenSpec::Bitrate { bitrate_min_bps, bitrate_max_bps } => {
                if bitrate_min_bps < 0.0 || bitrate_min_bps > bitrate_max_bps {
                    return Err("invalid bitrate range".into());
                }
                Ok(())
            }
        }
    }
}

/// One buffered downlink packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Packet {
    pub bytes: u64,
    pub enqueue_ms: f64,
    pub remaining: u64,
}

/// Draw the episode's requested bitrate for a constant-bitrate spec,
/// quantized so each KPI-period packet holds an integral byte count.
pub fn draw_requested_bitrate(
    spec: &TrafficGenSpec,
    kpi_period_ms: u64,
    rng: &mut RngStream,
) -> f64 {
    match *spec {
        TrafficGenSpec::Bitrate { bitrate_min_bps, bitrate_max_bps } => {
            let raw = rng.uniform(bitrate_min_bps, bitrate_max_bps);
            let quantum = 8000.0 / gcd(kpi_period_ms.max(1), 8000) as f64;
            (raw / quantum).round().max(1.0) * quantum
        }
        TrafficGenSpec::Periodic { .. } => 0.0,
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Arrivals due in [t0, t1) milliseconds. Periodic kinds use a global grid
/// with phase 0 at t=0; bitrate kinds emit one packet per KPI period
/// carrying rate * kpi_period / 8000 bytes. `requested_bitrate_bps` must be
/// set for bitrate specs (drawn once per UE per episode).
pub fn generate_arrivals(
    spec: &TrafficGenSpec,
    window: (f64, f64),
    kpi_period_ms: u64,
    requested_bitrate_bps: Option<f64>,
    rng: &mut RngStream,
) -> Vec<Packet> {
    let (t0, t1) = window;
    debug_assert!(t1 > t0);
    match *spec {
        TrafficGenSpec::Periodic { gen_freq_hz, bytes_min, bytes_max, jitter } => {
            let period = 1000.0 / gen_freq_hz;
            grid_instants(t0, t1, period)
                .map(|t| {
                    let t = if jitter > 0.0 {
                        (t + rng.unit() * jitter * period).min(t1 - 1e-6)
                    } else {
                        t
                    };
                    let bytes = rng.uniform_u64(bytes_min, bytes_max);
                    Packet { bytes, enqueue_ms: t, remaining: bytes }
                })
                .collect()
        }
        TrafficGenSpec::Bitrate { .. } => {
            let rate = requested_bitrate_bps.expect("bitrate traffic requires an episode draw");
            let bytes = (rate * kpi_period_ms as f64 / 8000.0).round() as u64;
            grid_instants(t0, t1, kpi_period_ms as f64)
                .map(|t| Packet { bytes, enqueue_ms: t, remaining: bytes })
                .collect()
        }
    }
}

/// Multiples of `period` falling in [t0, t1), tolerant of f64 grid fuzz.
fn grid_instants(t0: f64, t1: f64, period: f64) -> impl Iterator<Item = f64> {
    const EPS: f64 = 1e-9;
    let k0 = ((t0 - EPS) / period).ceil().max(0.0) as u64;
    (k0..)
        .map(move |k| k as f64 * period)
        .take_while(move |&t| t < t1 - EPS)
}

/// Result of one service call.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ServedSummary {
    pub bytes: u64,
    /// Latencies of packets fully drained by this call, ms.
    pub completed_latencies_ms: Vec<f64>,
}

/// KPI-window statistics, drained from the buffer at each sample boundary.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowStats {
    pub t_avg_ms: f64,
    pub bytes_served: u64,
    pub bytes_generated: u64,
    pub occupancy_bytes: u64,
    pub completed_latencies_ms: Vec<f64>,
}

/// FIFO downlink buffer for one UE.
#[derive(Debug, Clone, Default)]
pub struct DownlinkBuffer {
    queue: VecDeque<Packet>,
    occupancy: u64,
    // Current-window accumulators, reset by window_stats.
    window_served: u64,
    window_generated: u64,
    window_latencies: Vec<f64>,
    // Lifetime counters for conservation checks.
    pub total_generated: u64,
    pub total_served: u64,
}

impl DownlinkBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn occupancy_bytes(&self) -> u64 {
        self.occupancy
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn enqueue(&mut self, packet: Packet) {
        debug_assert!(packet.remaining <= packet.bytes);
        self.occupancy += packet.remaining;
        self.window_generated += packet.bytes;
        self.total_generated += packet.bytes;
        self.queue.push_back(packet);
    }

    /// Drain head-first up to `budget` bytes; fully drained packets log
    /// latency now - enqueue_time. Partial service leaves the head packet
    /// with a positive remainder.
    pub fn serve(&mut self, budget: u64, now_ms: f64) -> ServedSummary {
        let mut remaining_budget = budget;
        let mut summary = ServedSummary::default();
        while remaining_budget > 0 {
            let Some(head) = self.queue.front_mut() else { break };
            let take = head.remaining.min(remaining_budget);
            head.remaining -= take;
            remaining_budget -= take;
            summary.bytes += take;
            if head.remaining == 0 {
                let latency = now_ms - head.enqueue_ms;
                debug_assert!(latency >= 0.0);
                summary.completed_latencies_ms.push(latency);
                self.queue.pop_front();
            }
        }
        self.occupancy -= summary.bytes;
        self.window_served += summary.bytes;
        self.total_served += summary.bytes;
        self.window_latencies.extend_from_slice(&summary.completed_latencies_ms);
        summary
    }

    /// Close the current KPI window. The average latency falls back to the
    /// head-of-line age when nothing completed (starvation must be visible),
    /// and to zero when the system is idle.
    pub fn window_stats(&mut self, now_ms: f64) -> WindowStats {
        let t_avg_ms = if !self.window_latencies.is_empty() {
            self.window_latencies.iter().sum::<f64>() / self.window_latencies.len() as f64
        } else if let Some(head) = self.queue.front() {
            now_ms - head.enqueue_ms
        } else {
            0.0
        };
        let stats = WindowStats {
            t_avg_ms,
            bytes_served: self.window_served,
            bytes_generated: self.window_generated,
            occupancy_bytes: self.occupancy,
            completed_latencies_ms: std::mem::take(&mut self.window_latencies),
        };
        self.window_served = 0;
        self.window_generated = 0;
        stats
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::rng_substream;

    fn urllc_spec() -> TrafficGenSpec {
        TrafficGenSpec::periodic(2.0, 100_000, 300_000)
    }

    #[test]
    fn urllc_arrival_instants() {
        let mut rng = rng_substream(0, "traffic", 0);
        let pkts = generate_arrivals(&urllc_spec(), (0.0, 2000.0), 500, None, &mut rng);
        let instants: Vec<f64> = pkts.iter().map(|p| p.enqueue_ms).collect();
        assert_eq!(instants, vec![0.0, 500.0, 1000.0, 1500.0]);
        for p in &pkts {
            assert!(p.bytes >= 100_000 && p.bytes <= 300_000);
        }
    }

    #[test]
    fn mmtc_arrival_count_and_sizes() {
        let spec = TrafficGenSpec::periodic(4.0, 25_000, 60_000);
        let mut rng = rng_substream(0, "traffic", 1);
        let pkts = generate_arrivals(&spec, (0.0, 2000.0), 500, None, &mut rng);
        assert_eq!(pkts.len(), 8);
        for p in &pkts {
            assert!(p.bytes >= 25_000 && p.bytes <= 60_000);
        }
    }

    #[test]
    fn arrivals_use_the_global_grid() {
        let mut rng = rng_substream(0, "traffic", 0);
        let pkts = generate_arrivals(&urllc_spec(), (10_000.0, 12_000.0), 500, None, &mut rng);
        let instants: Vec<f64> = pkts.iter().map(|p| p.enqueue_ms).collect();
        assert_eq!(instants, vec![10_000.0, 10_500.0, 11_000.0, 11_500.0]);
    }

    #[test]
    fn embb_packet_size_from_bitrate() {
        let spec = TrafficGenSpec::Bitrate { bitrate_min_bps: 2e5, bitrate_max_bps: 4e5 };
        let mut rng = rng_substream(0, "traffic", 2);
        let pkts = generate_arrivals(&spec, (0.0, 2000.0), 500, Some(3e5), &mut rng);
        assert_eq!(pkts.len(), 4);
        assert!(pkts.iter().all(|p| p.bytes == 18_750));
    }

    #[test]
    fn requested_bitrate_is_quantized_to_integral_packets() {
        let spec = TrafficGenSpec::Bitrate { bitrate_min_bps: 2e5, bitrate_max_bps: 4e5 };
        let mut rng = rng_substream(9, "traffic", 3);
        for _ in 0..100 {
            let rate = draw_requested_bitrate(&spec, 500, &mut rng);
            assert!(rate >= 2e5 - 16.0 && rate <= 4e5 + 16.0);
            let bytes = rate * 500.0 / 8000.0;
            assert_eq!(bytes, bytes.round(), "rate {rate} gives fractional bytes");
        }
    }

    #[test]
    fn periodic_count_matches_closed_form() {
        for (freq, horizon) in [(2.0, 2000.0), (4.0, 2000.0), (2.0, 1750.0), (3.0, 1000.0), (1.0, 1.0)] {
            let spec = TrafficGenSpec::periodic(freq, 1, 1);
            let mut rng = rng_substream(0, "traffic", 0);
            let pkts = generate_arrivals(&spec, (0.0, horizon), 500, None, &mut rng);
            let expected = (horizon * freq / 1000.0).ceil() as usize;
            assert_eq!(pkts.len(), expected, "freq {freq} horizon {horizon}");
        }
    }

    #[test]
    fn jitter_shifts_arrivals_within_the_window() {
        let spec = TrafficGenSpec::Periodic {
            gen_freq_hz: 2.0,
            bytes_min: 100,
            bytes_max: 100,
            jitter: 0.5,
        };
        let mut rng = rng_substream(3, "traffic", 0);
        let pkts = generate_arrivals(&spec, (0.0, 2000.0), 500, None, &mut rng);
        assert_eq!(pkts.len(), 4);
        let mut prev = -1.0;
        for (k, p) in pkts.iter().enumerate() {
            let grid = k as f64 * 500.0;
            assert!(p.enqueue_ms >= grid && p.enqueue_ms < grid + 250.0, "{}", p.enqueue_ms);
            assert!(p.enqueue_ms < 2000.0);
            assert!(p.enqueue_ms > prev);
            prev = p.enqueue_ms;
        }
        assert!(TrafficGenSpec::periodic(2.0, 1, 2).validate().is_ok());
        let bad = TrafficGenSpec::Periodic { gen_freq_hz: 2.0, bytes_min: 1, bytes_max: 2, jitter: 1.0 };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn serve_exact_drain_logs_latency() {
        let mut buf = DownlinkBuffer::new();
        buf.enqueue(Packet { bytes: 100, enqueue_ms: 0.0, remaining: 100 });
        let s = buf.serve(100, 7.0);
        assert_eq!(s.bytes, 100);
        assert_eq!(s.completed_latencies_ms, vec![7.0]);
        assert!(buf.is_empty());
    }

    #[test]
    fn serve_partial_leaves_remainder() {
        let mut buf = DownlinkBuffer::new();
        buf.enqueue(Packet { bytes: 100, enqueue_ms: 0.0, remaining: 100 });
        buf.enqueue(Packet { bytes: 50, enqueue_ms: 1.0, remaining: 50 });
        let s = buf.serve(120, 5.0);
        assert_eq!(s.bytes, 120);
        assert_eq!(s.completed_latencies_ms.len(), 1);
        assert_eq!(buf.occupancy_bytes(), 30);
    }

    #[test]
    fn serve_zero_budget_is_a_noop() {
        let mut buf = DownlinkBuffer::new();
        buf.enqueue(Packet { bytes: 10, enqueue_ms: 0.0, remaining: 10 });
        let s = buf.serve(0, 3.0);
        assert_eq!(s.bytes, 0);
        assert!(s.completed_latencies_ms.is_empty());
    }

    #[test]
    fn window_stats_latency_rules() {
        // Completed packets: plain mean.
        let mut buf = DownlinkBuffer::new();
        buf.enqueue(Packet { bytes: 10, enqueue_ms: 0.0, remaining: 10 });
        buf.enqueue(Packet { bytes: 10, enqueue_ms: 0.0, remaining: 10 });
        buf.serve(10, 100.0);
        buf.serve(10, 300.0);
        let stats = buf.window_stats(500.0);
        assert_eq!(stats.t_avg_ms, 200.0);

        // Nothing completed: head-of-line age.
        let mut buf = DownlinkBuffer::new();
        buf.enqueue(Packet { bytes: 10, enqueue_ms: 200.0, remaining: 10 });
        let stats = buf.window_stats(1000.0);
        assert_eq!(stats.t_avg_ms, 800.0);

        // Idle: zero.
        let mut buf = DownlinkBuffer::new();
        let stats = buf.window_stats(1000.0);
        assert_eq!(stats.t_avg_ms, 0.0);
    }

    #[test]
    fn conservation_over_random_service() {
        let mut rng = rng_substream(11, "test-conservation", 0);
        for round in 0..50 {
            let mut buf = DownlinkBuffer::new();
            let mut rng2 = rng_substream(round, "test-conservation-arrivals", 0);
            let mut now = 0.0;
            for _ in 0..200 {
                now += 1.0;
                if rng2.unit() < 0.3 {
                    let bytes = rng2.uniform_u64(1, 5000);
                    buf.enqueue(Packet { bytes, enqueue_ms: now, remaining: bytes });
                }
                buf.serve(rng.uniform_u64(0, 2000), now);
            }
            assert_eq!(buf.total_generated, buf.total_served + buf.occupancy_bytes());
        }
    }

    #[test]
    fn fifo_completion_order() {
        let mut buf = DownlinkBuffer::new();
        for i in 0..10 {
            buf.enqueue(Packet { bytes: 10, enqueue_ms: i as f64, remaining: 10 });
        }
        let mut completions = Vec::new();
        let mut now = 20.0;
        while !buf.is_empty() {
            now += 1.0;
            let s = buf.serve(7, now);
            for lat in s.completed_latencies_ms {
                completions.push(now - lat); // recovered enqueue time
            }
        }
        let mut sorted = completions.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(completions, sorted);
    }
}
