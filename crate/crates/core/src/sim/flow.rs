//! Host-side state of one traffic flow: path choice, strikes, gaps.

use std::collections::{BTreeMap, BTreeSet};

use super::metrics::Metrics;
use super::scenario::FlowSpec;
use crate::combiner::EndToEndPath;
use crate::dataplane::ForwardingPath;
use crate::time::SimTime;
use crate::topology::{AsId, InterfaceId, LinkId, Topology};

/// Unacknowledged packets in a row before a path is given up.
pub const STRIKES: u32 = 3;

pub type PathId = Vec<(AsId, u16, u16)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketTag {
    Data { flow: usize, seq: u64 },
    Ack { flow: usize, seq: u64 },
    Notice { flow: usize },
}

#[derive(Debug, Clone)]
pub struct ActivePath {
    pub path: EndToEndPath,
    pub id: PathId,
    pub strikes: u32,
}

#[derive(Debug, Clone)]
pub struct FlowState {
    pub spec: FlowSpec,
    pub candidates: Vec<EndToEndPath>,
    pub active: Vec<ActivePath>,
    /// Interfaces the host was told are down, and until when to avoid them.
    pub avoid: Vec<(AsId, u16, SimTime)>,
    pub outstanding: BTreeMap<u64, PathId>,
    pub started: bool,
    pub lookup_pending: bool,
    pub ready_at: SimTime,
    pub sent: u64,
    pub acked: u64,
    pub delivered: u64,
    pub dropped: BTreeMap<String, u64>,
    pub inflight: u64,
    pub unsent: u64,
    pub isolated: u64,
    pub switchovers: u64,
    pub first_delivery: Option<SimTime>,
    pub last_delivery: Option<SimTime>,
    pub max_gap: SimTime,
    next_seq: u64,
    rr: usize,
}

/// Inter-AS links a path crosses.
pub fn path_links(p: &EndToEndPath, topo: &Topology) -> BTreeSet<LinkId> {
    p.hops
        .iter()
        .filter_map(|h| InterfaceId::new(h.egress).and_then(|i| topo.link_at(h.as_id, i)).map(|l| l.id))
        .collect()
}

fn uses(p: &EndToEndPath, a: AsId, ifid: u16) -> bool {
    p.hops.iter().any(|h| h.as_id == a && (h.ingress == ifid || h.egress == ifid))
}

impl FlowState {
    pub fn new(spec: FlowSpec) -> Self {
        FlowState {
            spec,
            candidates: Vec::new(),
            active: Vec::new(),
            avoid: Vec::new(),
            outstanding: BTreeMap::new(),
            started: false,
            lookup_pending: false,
            ready_at: SimTime::ZERO,
            sent: 0,
            acked: 0,
            delivered: 0,
            dropped: BTreeMap::new(),
            inflight: 0,
            unsent: 0,
            isolated: 0,
            switchovers: 0,
            first_delivery: None,
            last_delivery: None,
            max_gap: SimTime::ZERO,
            next_seq: 0,
            rr: 0,
        }
    }

    fn usable(&self, p: &EndToEndPath, now: SimTime) -> bool {
        p.expiry > now
            && !self
                .avoid
                .iter()
                .any(|&(a, i, until)| until > now && uses(p, a, i))
    }

    /// Top up the active set from the candidates, preferring paths that
    /// share the fewest links with those already chosen.
    pub fn fill(&mut self, topo: &Topology, now: SimTime) {
        self.avoid.retain(|a| a.2 > now);
        let want = self.spec.paths.max(1);
        let mut taken: BTreeMap<LinkId, usize> = BTreeMap::new();
        for a in &self.active {
            for l in path_links(&a.path, topo) {
                *taken.entry(l).or_default() += 1;
            }
        }
        while self.active.len() < want {
            let mut best: Option<(usize, usize)> = None;
            for (rank, p) in self.candidates.iter().enumerate() {
                if !self.usable(p, now) || self.active.iter().any(|a| a.id == p.identity()) {
                    continue;
                }
                let shared = path_links(p, topo).iter().filter(|l| taken.contains_key(l)).count();
                if best.is_none_or(|(s, _)| shared < s) {
                    best = Some((shared, rank));
                }
            }
            let Some((_, rank)) = best else { break };
            let p = self.candidates[rank].clone();
            for l in path_links(&p, topo) {
                *taken.entry(l).or_default() += 1;
            }
            self.active.push(ActivePath {
                id: p.identity(),
                path: p,
                strikes: 0,
            });
        }
    }

    /// Sequence number, path and path id of the next packet (round robin).
    pub fn next_packet(&mut self) -> (u64, ForwardingPath, PathId) {
        let i = self.rr % self.active.len();
        self.rr = self.rr.wrapping_add(1);
        let seq = self.next_seq;
        self.next_seq += 1;
        let a = &self.active[i];
        (seq, a.path.forwarding.clone(), a.id.clone())
    }

    fn drop_active(&mut self, keep: impl Fn(&ActivePath) -> bool, topo: &Topology, now: SimTime) -> bool {
        let before = self.active.len();
        self.active.retain(|a| keep(a));
        let removed = before - self.active.len();
        if removed == 0 {
            return false;
        }
        self.switchovers += removed as u64;
        self.fill(topo, now);
        true
    }

    /// Count a lost packet against a path. True when the path was dropped.
    pub fn strike(&mut self, id: &PathId, now: SimTime, topo: &Topology) -> bool {
        let Some(a) = self.active.iter_mut().find(|a| &a.id == id) else {
            return false;
        };
        a.strikes += 1;
        if a.strikes < STRIKES {
            return false;
        }
        let dead = id.clone();
        self.candidates.retain(|p| p.identity() != dead);
        self.drop_active(|a| a.id != dead, topo, now)
    }

    pub fn reset_strikes(&mut self, id: &PathId) {
        if let Some(a) = self.active.iter_mut().find(|a| &a.id == id) {
            a.strikes = 0;
        }
    }

    /// Handle an authenticated link-down notice. True when a path was dropped.
    pub fn revoke(&mut self, a: AsId, ifid: u16, now: SimTime, until: SimTime, topo: &Topology) -> bool {
        self.avoid.push((a, ifid, until));
        self.drop_active(|p| !uses(&p.path, a, ifid), topo, now)
    }

    pub fn on_delivery(&mut self, now: SimTime) {
        self.delivered += 1;
        if let Some(last) = self.last_delivery {
            self.max_gap = self.max_gap.max(now.saturating_sub(last));
        } else {
            self.first_delivery = Some(now);
        }
        self.last_delivery = Some(now);
    }

    /// Account for the silence between the last delivery and the end of the
    /// flow.
    pub fn close(&mut self, end: SimTime) {
        let stop = self.spec.stop.min(end);
        if let Some(last) = self.last_delivery {
            let tail = stop.saturating_sub(last);
            let period = SimTime::from_micros(1_000_000 / self.spec.rate.max(1) as u64);
            // Only a silence longer than one period is a gap.
            if tail > period {
                self.max_gap = self.max_gap.max(tail);
            }
        }
    }

    pub fn export(&self, i: usize, m: &mut Metrics) {
        let p = format!("flow.{i}.");
        m.add(format!("{p}sent"), self.sent);
        m.add(format!("{p}delivered"), self.delivered);
        m.add(format!("{p}acked"), self.acked);
        m.add(format!("{p}inflight"), self.inflight);
        m.add(format!("{p}unsent"), self.unsent);
        m.add(format!("{p}isolated"), self.isolated);
        m.add(format!("{p}switchovers"), self.switchovers);
        m.add(format!("{p}max_gap_us"), self.max_gap.as_micros());
        for (r, n) in &self.dropped {
            m.add(format!("{p}dropped.{r}"), *n);
        }
        m.set(format!("{p}route"), format!("{}->{}", self.spec.src, self.spec.dst));
    }

    /// Packets that left the source and are neither delivered, dropped nor
    /// still in the network.
    pub fn unaccounted(&self) -> i64 {
        let dropped: u64 = self.dropped.values().sum();
        self.sent as i64 - (self.delivered + dropped + self.inflight) as i64
    }
}
