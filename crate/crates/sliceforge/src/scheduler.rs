//! Slice-level PRB decisions turned into per-UE grants and per-subframe
//! service: largest-remainder apportionment, the subframe PRB limit, the
//! shared cell throughput cap, and the three-UE rotation.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::domain::{ScenarioConfig, SliceKind};
use crate::error::Error;
use crate::traffic::DownlinkBuffer;

/// Per-slice and per-UE PRB counts for one epoch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrbAllocation {
    pub urllc: u32,
    pub embb: u32,
    pub mmtc: u32,
    pub per_ue: BTreeMap<u32, u32>,
    pub total_prbs: u32,
}

impl PrbAllocation {
    pub fn slice_prbs(&self, kind: SliceKind) -> u32 {
        match kind {
            SliceKind::Urllc => self.urllc,
            SliceKind::Embb => self.embb,
            SliceKind::Mmtc => self.mmtc,
        }
    }

    pub fn slice_total(&self) -> u32 {
        self.urllc + self.embb + self.mmtc
    }

    /// Check the allocation invariants against the active set.
    pub fn validate(&self, active: &ActiveSet) -> Result<(), Error> {
        if self.slice_total() > self.total_prbs {
            return Err(Error::InvalidAllocation(format!(
                "slice PRBs {} exceed subframe limit {}",
                self.slice_total(),
                self.total_prbs
            )));
        }
        let ue_sum: u32 = self.per_ue.values().sum();
        if ue_sum != self.slice_total() {
            return Err(Error::InvalidAllocation(format!(
                "per-UE PRBs {} do not match slice PRBs {}",
                ue_sum,
                self.slice_total()
            )));
        }
        for id in self.per_ue.keys() {
            if !active.ue_ids.contains(id) {
                return Err(Error::InvalidAllocation(format!(
                    "UE {id} keyed in allocation but not active"
                )));
            }
        }
        Ok(())
    }

    /// Build from per-UE grants, deriving the slice totals.
    pub fn from_per_ue(grants: &[(u32, SliceKind, u32)], total_prbs: u32) -> PrbAllocation {
        let mut alloc = PrbAllocation {
            urllc: 0,
            embb: 0,
            mmtc: 0,
            per_ue: BTreeMap::new(),
            total_prbs,
        };
        for &(ue_id, slice, prbs) in grants {
            match slice {
                SliceKind::Urllc => alloc.urllc += prbs,
                SliceKind::Embb => alloc.embb += prbs,
                SliceKind::Mmtc => alloc.mmtc += prbs,
            }
            alloc.per_ue.insert(ue_id, prbs);
        }
        alloc
    }
}

/// The UEs transmitting during one epoch, ordered by slice index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveSet {
    pub epoch_index: u64,
    pub ue_ids: Vec<u32>,
}

/// Rotate the roster in groups of `group_size`. The roster is sorted by
/// (slice, ue_id) and striped across groups, so with equal per-slice counts
/// group i holds the i-th UE of every slice and each epoch exercises all
/// three slices.
pub fn rotate_active_set(cfg: &ScenarioConfig, epoch_index: u64) -> ActiveSet {
    let group_count = cfg.group_count() as u64;
    debug_assert!(group_count > 0, "validated scenario partitions into groups");
    let g = (epoch_index % group_count) as usize;
    let mut order: Vec<&crate::domain::UeProfile> = cfg.ues.iter().collect();
    order.sort_by_key(|u| (u.slice.index(), u.ue_id));
    let ue_ids = order
        .iter()
        .enumerate()
        .filter(|(j, _)| j % group_count as usize == g)
        .map(|(_, u)| u.ue_id)
        .collect();
    ActiveSet { epoch_index, ue_ids }
}

/// Largest-remainder apportionment of `total` units over nonnegative
/// weights: floor each exact share, then hand remaining units to the
/// largest fractional parts, ties broken by lowest index.
pub fn largest_remainder(weights: &[f64], total: u32) -> Vec<u32> {
    let sum: f64 = weights.iter().sum();
    debug_assert!(sum > 0.0 && weights.iter().all(|w| *w >= 0.0 && w.is_finite()));
    let shares: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut out: Vec<u32> = shares.iter().map(|s| s.floor() as u32).collect();
    let assigned: u32 = out.iter().sum();
    // Quantize fractional parts so float dust cannot override the
    // documented lowest-index tie-break on mathematically equal shares.
    let frac_key = |i: usize| ((shares[i] - shares[i].floor()) * 1e9).round() as i64;
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| frac_key(b).cmp(&frac_key(a)).then(a.cmp(&b)));
    for i in 0..(total - assigned) as usize {
        out[order[i % order.len()]] += 1;
    }
    out
}

/// Round a simplex point onto integer slice PRBs summing exactly to
/// `total_prbs`. Rejects NaN or negative components.
pub fn fractions_to_slice_prbs(fractions: [f64; 3], total_prbs: u32) -> Result<[u32; 3], Error> {
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !f.is_finite() || *f < 0.0) {
        return Err(Error::InvalidArgument(format!("fractions must be finite and nonnegative: {fractions:?}")));
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("fractions must sum to 1, got {sum}")));
    }
    let v = largest_remainder(&fractions, total_prbs);
    Ok([v[0], v[1], v[2]])
}

/// Split a slice grant across its active UEs: even floor first, remainder
/// one-by-one in descending link-loss order (ties by lowest ue_id).
pub fn slice_to_ue_prbs(slice_prbs: u32, slice_ues: &[(u32, f64)]) -> Vec<(u32, u32)> {
    if slice_ues.is_empty() {
        debug_assert!(slice_prbs == 0, "PRBs granted to a slice with no active UEs");
        return Vec::new();
    }
    let n = slice_ues.len() as u32;
    let base = slice_prbs / n;
    let mut remainder = slice_prbs % n;
    let mut order: Vec<usize> = (0..slice_ues.len()).collect();
    order.sort_by(|&a, &b| {
        slice_ues[b]
            .1
            .partial_cmp(&slice_ues[a].1)
            .unwrap()
            .then(slice_ues[a].0.cmp(&slice_ues[b].0))
    });
    let mut out: Vec<(u32, u32)> = slice_ues.iter().map(|&(id, _)| (id, base)).collect();
    for &i in &order {
        if remainder == 0 {
            break;
        }
        out[i].1 += 1;
        remainder -= 1;
    }
    out
}

/// Candidate per-UE rates scaled down proportionally when their sum exceeds
/// the shared cell cap.
pub fn scaled_rates(candidates: &[f64], cell_cap_bps: f64) -> Vec<f64> {
    let sum: f64 = candidates.iter().sum();
    if sum > cell_cap_bps && sum > 0.0 {
        let scale = cell_cap_bps / sum;
        candidates.iter().map(|c| c * scale).collect()
    } else {
        candidates.to_vec()
    }
}

/// One UE's service context for a subframe.
pub struct UeService<'a> {
    pub ue_id: u32,
    pub prbs: u32,
    pub per_prb_rate_bps: f64,
    pub buffer: &'a mut DownlinkBuffer,
    /// Fractional-byte carry so rates below one byte per subframe still
    /// deliver their long-run average exactly.
    pub carry: &'a mut f64,
}

/// Serve one subframe: rate = prbs * per-PRB rate, jointly capped at the
/// cell limit, converted to a byte budget for this subframe and drained
/// FIFO from each UE's buffer. Returns bytes served per UE.
pub fn serve_subframe(ues: &mut [UeService<'_>], cfg: &ScenarioConfig, now_ms: f64) -> Vec<u64> {
    let candidates: Vec<f64> =
        ues.iter().map(|u| u.prbs as f64 * u.per_prb_rate_bps).collect();
    let rates = scaled_rates(&candidates, cfg.cell_cap_bps);
    let dt_bytes = cfg.subframe_ms as f64 / 8000.0;
    let mut served = Vec::with_capacity(ues.len());
    for (ue, rate) in ues.iter_mut().zip(rates) {
        *ue.carry += rate * dt_bytes;
        let grant = ue.carry.floor() as u64;
        *ue.carry -= grant as f64;
        served.push(ue.buffer.serve(grant, now_ms).bytes);
    }
    served
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::default_scenario;
    use crate::traffic::Packet;

    #[test]
    fn rotation_mixes_one_ue_per_slice() {
        let cfg = default_scenario();
        let set0 = rotate_active_set(&cfg, 0);
        assert_eq!(set0.ue_ids, vec![0, 4, 8]);
        let set4 = rotate_active_set(&cfg, 4);
        assert_eq!(set0.ue_ids, set4.ue_ids);
        let set2 = rotate_active_set(&cfg, 2);
        assert_eq!(set2.ue_ids, vec![2, 6, 10]);
        // The stationary eMBB pair sits at roster positions 6 and 7.
        let stationary = cfg.ues.iter().find(|u| u.ue_id == 6).unwrap();
        assert_eq!(stationary.speed_kmh, 0.0);
    }

    #[test]
    fn rotation_visits_every_ue_once_per_cycle() {
        let cfg = default_scenario();
        let mut seen = std::collections::BTreeSet::new();
        for e in 0..cfg.group_count() as u64 {
            for id in rotate_active_set(&cfg, e).ue_ids {
                assert!(seen.insert(id), "UE {id} active twice in one cycle");
            }
        }
        assert_eq!(seen.len(), cfg.ues.len());
    }

    #[test]
    fn fractions_examples() {
        let thirds = fractions_to_slice_prbs([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 52).unwrap();
        assert_eq!(thirds, [18, 17, 17]);
        let corner = fractions_to_slice_prbs([1.0, 0.0, 0.0], 52).unwrap();
        assert_eq!(corner, [52, 0, 0]);
        let skew = fractions_to_slice_prbs([0.669, 0.268, 0.063], 52).unwrap();
        assert_eq!(skew, [35, 14, 3]);
    }

    #[test]
    fn fractions_reject_bad_inputs() {
        assert!(fractions_to_slice_prbs([f64::NAN, 0.5, 0.5], 52).is_err());
        assert!(fractions_to_slice_prbs([-0.1, 0.6, 0.5], 52).is_err());
        assert!(fractions_to_slice_prbs([0.5, 0.4, 0.2], 52).is_err());
    }

    #[test]
    fn fractions_sum_exactly_to_total() {
        let mut rng = crate::domain::rng_substream(0, "test-fractions", 0);
        for _ in 0..500 {
            let a = rng.unit();
            let b = rng.unit() * (1.0 - a);
            let f = [a, b, 1.0 - a - b];
            let total = rng.uniform_u64(0, 104) as u32;
            let out = fractions_to_slice_prbs(f, total).unwrap();
            assert_eq!(out.iter().sum::<u32>(), total);
        }
    }

    #[test]
    fn slice_split_examples() {
        assert_eq!(slice_to_ue_prbs(17, &[(3, 100.0)]), vec![(3, 17)]);
        let split = slice_to_ue_prbs(7, &[(1, 110.0), (2, 100.0)]);
        assert_eq!(split, vec![(1, 4), (2, 3)]);
        let zeros = slice_to_ue_prbs(0, &[(1, 110.0), (2, 100.0)]);
        assert!(zeros.iter().all(|&(_, p)| p == 0));
        // Tie on loss goes to the lower ue_id.
        let tied = slice_to_ue_prbs(5, &[(9, 100.0), (4, 100.0)]);
        assert_eq!(tied.iter().find(|&&(id, _)| id == 4).unwrap().1, 3);
    }

    #[test]
    fn cap_scaling() {
        let scaled = scaled_rates(&[20e6, 12e6, 8e6], 28e6);
        let total: f64 = scaled.iter().sum();
        assert!((total - 28e6).abs() < 1e-6);
        assert!((scaled[0] - 14e6).abs() < 1.0);
        let untouched = scaled_rates(&[4e6, 3e6, 3e6], 28e6);
        assert_eq!(untouched, vec![4e6, 3e6, 3e6]);
    }

    #[test]
    fn subframe_service_respects_grants() {
        let cfg = default_scenario();
        let mut buf_a = DownlinkBuffer::new();
        let mut buf_b = DownlinkBuffer::new();
        buf_a.enqueue(Packet { bytes: 100_000, enqueue_ms: 0.0, remaining: 100_000 });
        buf_b.enqueue(Packet { bytes: 100_000, enqueue_ms: 0.0, remaining: 100_000 });
        let (mut ca, mut cb) = (0.0, 0.0);
        let mut ues = [
            UeService { ue_id: 0, prbs: 10, per_prb_rate_bps: 800e3, buffer: &mut buf_a, carry: &mut ca },
            UeService { ue_id: 1, prbs: 0, per_prb_rate_bps: 800e3, buffer: &mut buf_b, carry: &mut cb },
        ];
        let served = serve_subframe(&mut ues, &cfg, 0.0);
        // 8 Mbps for 1 ms = 1000 bytes.
        assert_eq!(served, vec![1000, 0]);
    }

    #[test]
    fn allocation_validation() {
        let active = ActiveSet { epoch_index: 0, ue_ids: vec![0, 4, 8] };
        let good = PrbAllocation::from_per_ue(
            &[(0, SliceKind::Urllc, 20), (4, SliceKind::Embb, 16), (8, SliceKind::Mmtc, 16)],
            52,
        );
        assert!(good.validate(&active).is_ok());
        let over = PrbAllocation::from_per_ue(&[(0, SliceKind::Urllc, 53)], 52);
        assert!(over.validate(&active).is_err());
        let stranger = PrbAllocation::from_per_ue(&[(7, SliceKind::Urllc, 1)], 52);
        assert!(stranger.validate(&active).is_err());
    }

    proptest::proptest! {
        #[test]
        fn fractions_always_sum_to_total(a in 0.0f64..1.0, b in 0.0f64..1.0, total in 0u32..104) {
            let a2 = a;
            let b2 = b * (1.0 - a2);
            let f = [a2, b2, 1.0 - a2 - b2];
            let out = fractions_to_slice_prbs(f, total).unwrap();
            proptest::prop_assert_eq!(out.iter().sum::<u32>(), total);
        }

        #[test]
        fn apportionment_is_permutation_equivariant_without_ties(
            w in proptest::collection::vec(0.01f64..1.0, 3),
            total in 1u32..52,
        ) {
            // Skip near-ties, where the documented index tie-break makes
            // permutation equivariance intentionally fail.
            let shares: Vec<f64> = {
                let s: f64 = w.iter().sum();
                w.iter().map(|x| total as f64 * x / s).collect()
            };
            let fracs: Vec<f64> = shares.iter().map(|s| s - s.floor()).collect();
            for i in 0..3 {
                for j in (i + 1)..3 {
                    proptest::prop_assume!((fracs[i] - fracs[j]).abs() > 1e-6);
                }
            }
            let base = largest_remainder(&w, total);
            let swapped = {
                let w2 = vec![w[1], w[0], w[2]];
                let o = largest_remainder(&w2, total);
                vec![o[1], o[0], o[2]]
            };
            proptest::prop_assert_eq!(base, swapped);
        }
    }

    /// Exhaustive L1-optimality of largest remainder on small instances;
    /// the oracle picks the lexicographically largest optimum, which is
    /// what floor-plus-lowest-index tie-breaking produces.
    #[test]
    fn largest_remainder_matches_l1_oracle_small() {
        for total in 0..=8u32 {
            for a in 0..4u64 {
                for b in 0..4u64 {
                    for c in 0..4u64 {
                        if a + b + c == 0 {
                            continue;
                        }
                        let w = [a as f64, b as f64, c as f64];
                        let got = largest_remainder(&w, total);
                        let best = l1_oracle(&w, total);
                        assert_eq!(got, best, "weights {w:?} total {total}");
                    }
                }
            }
        }
    }

    fn l1_oracle(weights: &[f64], total: u32) -> Vec<u32> {
        let sum: f64 = weights.iter().sum();
        let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
        let mut best: Option<(f64, Vec<u32>)> = None;
        let n = weights.len();
        let mut alloc = vec![0u32; n];
        enumerate(&mut alloc, 0, total, &exact, &mut best);
        best.unwrap().1
    }

    fn enumerate(
        alloc: &mut Vec<u32>,
        i: usize,
        left: u32,
        exact: &[f64],
        best: &mut Option<(f64, Vec<u32>)>,
    ) {
        if i == alloc.len() - 1 {
            alloc[i] = left;
            let cost: f64 =
                alloc.iter().zip(exact).map(|(a, e)| (*a as f64 - e).abs()).sum();
            let better = match best {
                None => true,
                Some((c, v)) => cost < *c - 1e-12 || (cost < *c + 1e-12 && alloc > v),
            };
            if better {
                *best = Some((cost, alloc.clone()));
            }
            return;
        }
        for take in 0..=left {
            alloc[i] = take;
            enumerate(alloc, i + 1, left - take, exact, best);
        }
    }
}
