//! Comparison metrics across policies: per-epoch URLLC latency, eMBB
//! delta bitrate and mMTC delta payload, turned into empirical CDFs and
//! plot-ready CSV files.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::control_loop::EpochReport;
use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKind {
    UrllcLatencyMs,
    EmbbDeltaBitrateBps,
    MmtcDeltaPayloadBytes,
}

pub const METRIC_KINDS: [MetricKind; 3] = [
    MetricKind::UrllcLatencyMs,
    MetricKind::EmbbDeltaBitrateBps,
    MetricKind::MmtcDeltaPayloadBytes,
];

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MetricKind::UrllcLatencyMs => "urllc_latency_ms",
            MetricKind::EmbbDeltaBitrateBps => "embb_delta_bitrate_bps",
            MetricKind::MmtcDeltaPayloadBytes => "mmtc_delta_payload_bytes",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSample {
    pub policy: String,
    pub metric: MetricKind,
    pub value: f64,
}

/// Per-epoch samples: URLLC average latency, signed eMBB achieved-minus
/// -requested bitrate, signed mMTC received-minus-expected payload.
pub fn extract_metrics(policy: &str, reports: &[EpochReport]) -> Vec<MetricSample> {
    let mut out = Vec::with_capacity(reports.len() * 3);
    for r in reports {
        out.push(MetricSample {
            policy: policy.to_string(),
            metric: MetricKind::UrllcLatencyMs,
            value: r.kpi.urllc.t_avg_ms,
        });
        out.push(MetricSample {
            policy: policy.to_string(),
            metric: MetricKind::EmbbDeltaBitrateBps,
            value: r.kpi.embb.b_avg_bps - r.kpi.embb.b_target_bps,
        });
        out.push(MetricSample {
            policy: policy.to_string(),
            metric: MetricKind::MmtcDeltaPayloadBytes,
            value: r.kpi.mmtc.b_received_bytes as f64 - r.kpi.mmtc.b_expected_bytes as f64,
        });
    }
    out
}

/// Completed-packet URLLC latencies, when the log carries them.
pub fn extract_packet_latencies(reports: &[EpochReport]) -> Vec<f64> {
    reports.iter().flat_map(|r| r.kpi.urllc.latencies_ms.iter().copied()).collect()
}

/// Right-continuous empirical distribution F(x) = (# samples <= x)/n.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    values: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut samples: Vec<f64>) -> Result<EmpiricalCdf, Error> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("empty sample set".into()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cdf sample".into()));
        }
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(EmpiricalCdf { values: samples })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sorted_values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, x: f64) -> f64 {
        // partition_point gives the count of samples <= x on sorted data.
        let count = self.values.partition_point(|v| *v <= x);
        count as f64 / self.values.len() as f64
    }

    /// Nearest-rank quantile: the ceil(p*n)-th smallest sample.
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.values.len();
        let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
        self.values[rank - 1]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub p50: f64,
    pub p90: f64,
    pub p95: f64,
    pub mean: f64,
}

pub fn summarize(cdf: &EmpiricalCdf) -> Summary {
    Summary {
        p50: cdf.quantile(0.50),
        p90: cdf.quantile(0.90),
        p95: cdf.quantile(0.95),
        mean: cdf.mean(),
    }
}

/// One policy's sample sets, ready for CDF emission.
#[derive(Debug, Clone)]
pub struct PolicyMetrics {
    pub policy: String,
    pub samples: Vec<MetricSample>,
    pub packet_latencies_ms: Vec<f64>,
}

impl PolicyMetrics {
    pub fn from_reports(policy: &str, reports: &[EpochReport]) -> PolicyMetrics {
        PolicyMetrics {
            policy: policy.to_string(),
            samples: extract_metrics(policy, reports),
            packet_latencies_ms: extract_packet_latencies(reports),
        }
    }

    pub fn values_of(&self, metric: MetricKind) -> Vec<f64> {
        self.samples.iter().filter(|s| s.metric == metric).map(|s| s.value).collect()
    }
}

fn write_file(path: &Path, content: &str) -> Result<(), Error> {
    std::fs::write(path, content).map_err(|e| Error::io(path, e))
}

/// Emit one CDF CSV per metric (policy, value, cdf; values ascending per
/// policy, policies in input order) plus a quantile summary CSV. A
/// per-packet URLLC latency CDF is added when any policy carries samples.
/// Returns the created file paths.
pub fn emit_report(policies: &[PolicyMetrics], out_dir: &Path) -> Result<Vec<PathBuf>, Error> {
    if policies.is_empty() {
        return Err(Error::InvalidArgument("no policies to report".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut summary = String::from("policy,metric,p50,p90,p95,mean\n");

    for metric in METRIC_KINDS {
        let mut csv = String::from("policy,value,cdf\n");
        for pm in policies {
            let values = pm.values_of(metric);
            if values.is_empty() {
                continue;
            }
            let cdf = EmpiricalCdf::new(values)?;
            let n = cdf.len() as f64;
            for (i, v) in cdf.sorted_values().iter().enumerate() {
                csv.push_str(&format!("{},{},{}\n", pm.policy, v, (i + 1) as f64 / n));
            }
            let s = summarize(&cdf);
            summary.push_str(&format!(
                "{},{},{},{},{},{}\n",
                pm.policy, metric, s.p50, s.p90, s.p95, s.mean
            ));
        }
        let path = out_dir.join(format!("cdf_{metric}.csv"));
        write_file(&path, &csv)?;
        written.push(path);
    }

    if policies.iter().any(|p| !p.packet_latencies_ms.is_empty()) {
        let mut csv = String::from("policy,value,cdf\n");
        for pm in policies {
            if pm.packet_latencies_ms.is_empty() {
                continue;
            }
            let cdf = EmpiricalCdf::new(pm.packet_latencies_ms.clone())?;
            let n = cdf.len() as f64;
            for (i, v) in cdf.sorted_values().iter().enumerate() {
                csv.push_str(&format!("{},{},{}\n", pm.policy, v, (i + 1) as f64 / n));
            }
            let s = summarize(&cdf);
            summary.push_str(&format!(
                "{},urllc_packet_latency_ms,{},{},{},{}\n",
                pm.policy, s.p50, s.p90, s.p95, s.mean
            ));
        }
        let path = out_dir.join("cdf_urllc_packet_latency_ms.csv");
        write_file(&path, &csv)?;
        written.push(path);
    }

    let path = out_dir.join("summary.csv");
    write_file(&path, &summary)?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control_loop::{AllocRecord, EmbbKpi, KpiRecord, MmtcKpi, UrllcKpi};
    use crate::rewards::RewardBreakdown;
    use std::collections::BTreeMap;

    fn report(t_avg: f64, b_avg: f64, b_target: f64, recv: u64, exp: u64) -> EpochReport {
        EpochReport {
            v: 1,
            epoch: 0,
            active_ues: vec![0, 4, 8],
            alloc: AllocRecord { urllc: 18, embb: 17, mmtc: 17, per_ue: BTreeMap::new() },
            kpi: KpiRecord {
                urllc: UrllcKpi { t_avg_ms: t_avg, latencies_ms: vec![t_avg] },
                embb: EmbbKpi { b_avg_bps: b_avg, b_target_bps: b_target },
                mmtc: MmtcKpi { b_received_bytes: recv, b_expected_bytes: exp },
            },
            reward: RewardBreakdown { urllc: 0.0, embb: 0.0, mmtc: 0.0, total: 0.0 },
            t_ms: 2000,
        }
    }

    #[test]
    fn metric_extraction_examples() {
        let reports = vec![report(750.0, 3e5, 3e5, 50_000, 100_000)];
        let samples = extract_metrics("pf", &reports);
        assert_eq!(samples.len(), 3);
        assert_eq!(samples[0].value, 750.0);
        assert_eq!(samples[1].value, 0.0);
        assert_eq!(samples[2].value, -50_000.0);
    }

    #[test]
    fn cdf_basics() {
        let cdf = EmpiricalCdf::new(vec![3.0, 1.0, 2.0]).unwrap();
        assert!((cdf.eval(2.0) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(cdf.eval(0.5), 0.0);
        assert_eq!(cdf.eval(3.0), 1.0);
        assert_eq!(cdf.eval(99.0), 1.0);
        let ties = EmpiricalCdf::new(vec![5.0, 5.0]).unwrap();
        assert_eq!(ties.eval(5.0), 1.0);
        assert!(EmpiricalCdf::new(vec![]).is_err());
    }

    #[test]
    fn cdf_is_monotone_in_bounds() {
        let mut rng = crate::domain::rng_substream(0, "test-cdf", 0);
        let samples: Vec<f64> = (0..200).map(|_| rng.uniform(-10.0, 10.0)).collect();
        let cdf = EmpiricalCdf::new(samples).unwrap();
        let mut prev = 0.0;
        for i in -110..=110 {
            let f = cdf.eval(i as f64 / 10.0);
            assert!((0.0..=1.0).contains(&f));
            assert!(f >= prev);
            prev = f;
        }
    }

    #[test]
    fn nearest_rank_quantiles() {
        let cdf = EmpiricalCdf::new((1..=100).map(|i| i as f64).collect()).unwrap();
        assert_eq!(cdf.quantile(0.90), 90.0);
        assert_eq!(cdf.quantile(0.50), 50.0);
        let single = EmpiricalCdf::new(vec![7.5]).unwrap();
        let s = summarize(&single);
        assert_eq!((s.p50, s.p90, s.p95, s.mean), (7.5, 7.5, 7.5, 7.5));
        let pair = EmpiricalCdf::new(vec![0.0, 1000.0]).unwrap();
        assert_eq!(summarize(&pair).mean, 500.0);
        let s = summarize(&cdf);
        assert!(s.p50 <= s.p90 && s.p90 <= s.p95);
    }

    #[test]
    fn report_files_and_determinism() {
        let reports_a = vec![
            report(100.0, 3e5, 3e5, 10, 10),
            report(200.0, 2e5, 3e5, 5, 10),
        ];
        let reports_b = vec![report(400.0, 1e5, 3e5, 2, 10)];
        let policies = vec![
            PolicyMetrics::from_reports("ppo", &reports_a),
            PolicyMetrics::from_reports("equal", &reports_b),
        ];
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&policies, dir.path()).unwrap();
        // Three metric CDFs, one packet-latency CDF, one summary.
        assert_eq!(files.len(), 5);
        let first = std::fs::read_to_string(dir.path().join("cdf_urllc_latency_ms.csv")).unwrap();
        assert!(first.starts_with("policy,value,cdf\n"));
        assert!(first.contains("ppo,100,0.5"));
        let again = emit_report(&policies, dir.path()).unwrap();
        for f in &again {
            let _ = std::fs::read_to_string(f).unwrap();
        }
        let second = std::fs::read_to_string(dir.path().join("cdf_urllc_latency_ms.csv")).unwrap();
        assert_eq!(first, second);
    }
}
