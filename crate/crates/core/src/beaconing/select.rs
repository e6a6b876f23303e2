//! Beacon scoring and selection.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use super::pcb::{HopKey, Pcb};
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq)]
pub struct BeaconPolicy {
    /// `None` disables truncation (every candidate is sent).
    pub k_intra: Option<usize>,
    pub interval_intra: SimTime,
    pub k_inter: Option<usize>,
    pub interval_inter: SimTime,
    /// (length, disjointness, freshness, consistency)
    pub weights: [f64; 4],
    pub required_labels: BTreeSet<String>,
    pub expiry_units: u8,
}

impl Default for BeaconPolicy {
    fn default() -> Self {
        BeaconPolicy {
            k_intra: Some(5),
            interval_intra: SimTime::from_secs(15),
            k_inter: Some(3),
            interval_inter: SimTime::from_secs(60),
            weights: [0.4, 0.3, 0.2, 0.1],
            required_labels: BTreeSet::new(),
            expiry_units: crate::dataplane::opaque::DEFAULT_EXPIRY_UNITS,
        }
    }
}

impl BeaconPolicy {
    pub fn validate(&self) -> Result<(), String> {
        if self.k_intra == Some(0) || self.k_inter == Some(0) {
            return Err("k must be at least 1".into());
        }
        if self.interval_intra == SimTime::ZERO || self.interval_inter == SimTime::ZERO {
            return Err("beacon intervals must be positive".into());
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err("weights must be nonnegative".into());
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(format!("weights sum to {sum}, expected 1"));
        }
        Ok(())
    }
}

pub fn jaccard(a: &BTreeSet<HopKey>, b: &BTreeSet<HopKey>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// One candidate as seen by the scorer.
#[derive(Debug, Clone)]
pub struct Candidate<'a> {
    pub pcb: &'a Pcb,
    /// True if every traversed link carries every required label.
    pub consistent: bool,
}

pub fn freshness(created: SimTime, now: SimTime, interval: SimTime) -> f64 {
    let age = now.saturating_sub(created).as_micros() as f64;
    (1.0 - age / (3.0 * interval.as_micros() as f64)).max(0.0)
}

pub fn score(
    c: &Candidate<'_>,
    hop_set: &BTreeSet<HopKey>,
    sent: &[BTreeSet<HopKey>],
    weights: &[f64; 4],
    now: SimTime,
    interval: SimTime,
) -> f64 {
    let len = 1.0 / c.pcb.hops.len() as f64;
    let overlap = sent.iter().map(|s| jaccard(hop_set, s)).fold(0.0, f64::max);
    let fresh = freshness(c.pcb.info.created(), now, interval);
    let consistent = if c.consistent { 1.0 } else { 0.0 };
    weights[0] * len + weights[1] * (1.0 - overlap) + weights[2] * fresh + weights[3] * consistent
}

fn tie_break(a: &Pcb, b: &Pcb) -> Ordering {
    a.info
        .timestamp
        .cmp(&b.info.timestamp)
        .then(a.info.origin.cmp(&b.info.origin))
        .then_with(|| a.identity().cmp(&b.identity()))
}

/// Pick up to `k` candidates greedily: each pick is the highest score
/// against the link history plus the picks made so far, so later picks favor
/// hops not yet covered. Returns indices into `cands`.
pub fn select(
    cands: &[Candidate<'_>],
    history: &[BTreeSet<HopKey>],
    k: Option<usize>,
    weights: &[f64; 4],
    now: SimTime,
    interval: SimTime,
) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cands.len()).collect();
    let Some(k) = k else {
        order.sort_by(|&a, &b| tie_break(cands[a].pcb, cands[b].pcb));
        return order;
    };
    let sets: Vec<BTreeSet<HopKey>> = cands.iter().map(|c| c.pcb.hop_set()).collect();
    let mut sent: Vec<BTreeSet<HopKey>> = history.to_vec();
    let mut picked = Vec::new();
    let mut remaining = order;
    while picked.len() < k && !remaining.is_empty() {
        let scores: Vec<f64> = remaining
            .iter()
            .map(|&i| score(&cands[i], &sets[i], &sent, weights, now, interval))
            .collect();
        let best = (0..remaining.len())
            .max_by(|&x, &y| {
                scores[x]
                    .total_cmp(&scores[y])
                    .then_with(|| tie_break(cands[remaining[y]].pcb, cands[remaining[x]].pcb))
            })
            .expect("non-empty");
        let idx = remaining.remove(best);
        sent.push(sets[idx].clone());
        picked.push(idx);
    }
    order = picked;
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beaconing::pcb::{HopEntry, PcbInfo, PcbKind};
    use crate::crypto::Signature;
    use crate::dataplane::opaque::OpaqueField;
    use crate::topology::{AsId, IsdId};

    fn fake(origin: u32, ts: u32, path: &[u32]) -> Pcb {
        let hop = |n: u32, i: usize| HopEntry {
            as_id: AsId::new(1, n),
            ingress: if i == 0 { 0 } else { 1 },
            egress: 2,
            of: OpaqueField {
                flags: 0,
                expiry: 169,
                ingress: 0,
                egress: 0,
                mac: 0,
            },
            peers: vec![],
            trc_version: 1,
            cert_version: 1,
            signature: Signature([0; 64]),
        };
        Pcb {
            info: PcbInfo {
                timestamp: ts,
                origin: AsId::new(1, origin),
                isd: IsdId::new(1).unwrap(),
                kind: PcbKind::Intra,
            },
            hops: std::iter::once(origin).chain(path.iter().copied()).enumerate().map(|(i, n)| hop(n, i)).collect(),
        }
    }

    fn cands(pcbs: &[Pcb]) -> Vec<Candidate<'_>> {
        pcbs.iter().map(|pcb| Candidate { pcb, consistent: true }).collect()
    }

    const W: [f64; 4] = [0.4, 0.3, 0.2, 0.1];

    #[test]
    fn small_pool_fully_selected() {
        let pool = vec![fake(1, 0, &[10]), fake(2, 0, &[11])];
        let picked = select(&cands(&pool), &[], Some(5), &W, SimTime::from_secs(1), SimTime::from_secs(15));
        assert_eq!(picked.len(), 2);
    }

    #[test]
    fn equal_scores_prefer_older_then_lower_origin() {
        let pool = vec![fake(2, 10, &[20]), fake(1, 10, &[21]), fake(3, 5, &[22])];
        let now = SimTime::from_secs(10);
        // Freshness differs with age, so weight only the tie-neutral terms.
        let w = [0.5, 0.0, 0.0, 0.5];
        let picked = select(&cands(&pool), &[], Some(3), &w, now, SimTime::from_secs(15));
        assert_eq!(picked, vec![2, 1, 0]);
    }

    #[test]
    fn freshness_term() {
        let i = SimTime::from_secs(15);
        assert_eq!(freshness(SimTime::ZERO, SimTime::ZERO, i), 1.0);
        assert!((freshness(SimTime::ZERO, SimTime::from_secs(15), i) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(freshness(SimTime::ZERO, SimTime::from_secs(100), i), 0.0);
    }

    /// Independent scorer: recomputes every term from scratch on AS lists.
    fn oracle_score(pcb: &Pcb, others: &[&Pcb], w: &[f64; 4], now: u64, interval: u64) -> f64 {
        let set = |p: &Pcb| -> Vec<(AsId, u16, u16)> { p.hops.iter().map(|h| (h.as_id, h.ingress, h.egress)).collect() };
        let mine = set(pcb);
        let mut max_overlap = 0.0f64;
        for o in others {
            let theirs = set(o);
            let inter = mine.iter().filter(|h| theirs.contains(h)).count() as f64;
            let union = (mine.len() + theirs.len()) as f64 - inter;
            max_overlap = max_overlap.max(inter / union);
        }
        let age = now as f64 - pcb.info.timestamp as f64;
        let fresh = (1.0 - age / (3.0 * interval as f64)).max(0.0);
        w[0] / pcb.hops.len() as f64 + w[1] * (1.0 - max_overlap) + w[2] * fresh + w[3]
    }

    #[test]
    fn disjoint_candidate_always_selected() {
        // Ten beacons sharing origin 1 and its first hop, one beacon from a
        // different origin sharing nothing.
        let mut pool: Vec<Pcb> = (0..10).map(|i| fake(1, 0, &[10, 100 + i])).collect();
        pool.push(fake(2, 0, &[20, 200]));
        let grid = [0.0, 0.1, 0.25, 0.5, 0.75, 1.0];
        let mut checked = 0;
        for &wl in &grid {
            for &wd in &grid[1..] {
                for &wf in &grid {
                    let wc = 1.0 - wl - wd - wf;
                    if wc < -1e-9 {
                        continue;
                    }
                    let w: [f64; 4] = [wl, wd, wf, f64::max(wc, 0.0)];
                    let picked = select(&cands(&pool), &[], Some(5), &w, SimTime::from_secs(3), SimTime::from_secs(15));
                    assert!(picked.contains(&10), "weights {w:?} picked {picked:?}");

                    // The second greedy pick matches the oracle's argmax.
                    let first = &pool[picked[0]];
                    let best = (0..pool.len())
                        .filter(|&i| i != picked[0])
                        .max_by(|&a, &b| {
                            oracle_score(&pool[a], &[first], &w, 3, 15)
                                .total_cmp(&oracle_score(&pool[b], &[first], &w, 3, 15))
                                .then(b.cmp(&a))
                        })
                        .unwrap();
                    assert_eq!(picked[1], best);
                    checked += 1;
                }
            }
        }
        assert!(checked > 20);
    }

    #[test]
    fn history_penalizes_repeats() {
        let pool = vec![fake(1, 0, &[10]), fake(1, 0, &[11])];
        let hist = vec![pool[0].hop_set()];
        let picked = select(&cands(&pool), &hist, Some(1), &W, SimTime::ZERO, SimTime::from_secs(15));
        assert_eq!(picked, vec![1]);
    }

    #[test]
    fn policy_validation() {
        assert!(BeaconPolicy::default().validate().is_ok());
        let p = BeaconPolicy { k_intra: Some(0), ..BeaconPolicy::default() };
        assert!(p.validate().is_err());
        let p = BeaconPolicy { weights: [0.5, 0.5, 0.5, 0.0], ..BeaconPolicy::default() };
        assert!(p.validate().is_err());
    }
}
