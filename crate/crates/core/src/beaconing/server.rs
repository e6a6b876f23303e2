//! Per-AS beacon server: candidate pool, propagation rounds and the choice
//! of segments to register.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::pcb::{HopKey, Pcb, PcbKind, Signer};
use super::select::{select, BeaconPolicy, Candidate};
use crate::time::SimTime;
use crate::topology::{AsId, InterfaceId, IsdId, LinkType, Topology};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolEntry {
    pub pcb: Pcb,
    pub ingress: u16,
    pub received: SimTime,
}

/// A beacon to be sent on `egress`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Emission {
    pub egress: u16,
    pub pcb: Pcb,
}

/// Per-link outcome of one intra-ISD propagation round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkRound {
    pub egress: u16,
    pub eligible: usize,
    pub emitted: usize,
}

/// Everything a round needs from the surrounding AS.
pub struct AsView<'a> {
    pub topo: &'a Topology,
    pub signer: Signer<'a>,
    pub policy: &'a BeaconPolicy,
    pub link_up: &'a dyn Fn(u16) -> bool,
    pub now: SimTime,
}

impl AsView<'_> {
    fn me(&self) -> AsId {
        self.signer.secrets.owner
    }

    fn live_peers(&self) -> Vec<(AsId, u16, u16)> {
        self.topo
            .neighbors(self.me(), LinkType::Peering)
            .unwrap_or_default()
            .into_iter()
            .filter(|n| (self.link_up)(n.local_if.value()))
            .map(|n| (n.remote, n.remote_if.value(), n.local_if.value()))
            .collect()
    }

    /// True if every link the beacon crosses, plus the link on `egress`,
    /// carries every required label.
    fn consistent(&self, pcb: &Pcb, egress: Option<u16>) -> bool {
        let req = &self.policy.required_labels;
        if req.is_empty() {
            return true;
        }
        let has = |a: AsId, i: u16| {
            InterfaceId::new(i)
                .and_then(|i| self.topo.link_at(a, i))
                .is_some_and(|l| req.is_subset(&l.labels))
        };
        pcb.hops.iter().filter(|h| h.egress != 0).all(|h| has(h.as_id, h.egress))
            && egress.is_none_or(|e| has(self.me(), e))
    }
}

type PoolKey = (PcbKind, u16, Vec<HopKey>);

#[derive(Debug, Clone, Default)]
pub struct BeaconServer {
    pub as_id: Option<AsId>,
    pool: BTreeMap<PoolKey, PoolEntry>,
    history: BTreeMap<u16, VecDeque<(SimTime, BTreeSet<HopKey>)>>,
    core_sent: BTreeMap<(u16, AsId), Vec<Vec<HopKey>>>,
    registered: BTreeMap<Vec<HopKey>, SimTime>,
    revoked: BTreeMap<(AsId, u16), SimTime>,
}

/// What the AS should upload after a registration round.
#[derive(Debug, Clone, Default)]
pub struct Registrations {
    /// Terminated beacons, new or refreshed.
    pub segments: Vec<Pcb>,
    /// Identities selected this round (registered earlier or now).
    pub selected: usize,
}

fn hops_uses(pcb: &Pcb, revoked: &BTreeMap<(AsId, u16), SimTime>) -> bool {
    revoked
        .iter()
        .any(|(&(a, i), &at)| pcb.info.created() <= at && pcb.uses_interface(a, i))
}

impl BeaconServer {
    pub fn new(as_id: AsId) -> Self {
        BeaconServer {
            as_id: Some(as_id),
            ..Default::default()
        }
    }

    pub fn pool(&self) -> impl Iterator<Item = &PoolEntry> {
        self.pool.values()
    }

    pub fn pool_len(&self, kind: PcbKind) -> usize {
        self.pool.keys().filter(|k| k.0 == kind).count()
    }

    pub fn registered_len(&self) -> usize {
        self.registered.len()
    }

    /// Add a validated beacon. A newer beacon over the same hops replaces the
    /// older one. Returns true if a new hop sequence entered the pool.
    pub fn receive(&mut self, pcb: Pcb, ingress: u16, now: SimTime) -> bool {
        if hops_uses(&pcb, &self.revoked) {
            return false;
        }
        let key = (pcb.info.kind, ingress, pcb.identity());
        match self.pool.get_mut(&key) {
            Some(e) => {
                if pcb.info.timestamp >= e.pcb.info.timestamp {
                    *e = PoolEntry { pcb, ingress, received: now };
                }
                false
            }
            None => {
                self.pool.insert(key, PoolEntry { pcb, ingress, received: now });
                true
            }
        }
    }

    fn prune(&mut self, now: SimTime) {
        self.pool.retain(|_, e| e.pcb.expiry() > now);
        self.registered.retain(|_, exp| *exp > now);
    }

    /// Drop everything that uses the revoked interface. Returns the number of
    /// pool entries removed.
    pub fn revoke(&mut self, as_id: AsId, interface: u16, at: SimTime) -> usize {
        self.revoked.insert((as_id, interface), at);
        let before = self.pool.len();
        self.pool.retain(|_, e| !e.pcb.uses_interface(as_id, interface));
        self.registered
            .retain(|id, _| !id.iter().any(|&(a, i, e)| a == as_id && (i == interface || e == interface)));
        self.core_sent.clear();
        before - self.pool.len()
    }

    fn record_sent(&mut self, egress: u16, set: BTreeSet<HopKey>, now: SimTime, window: SimTime) {
        let h = self.history.entry(egress).or_default();
        h.push_back((now, set));
        while h.front().is_some_and(|(t, _)| now.saturating_sub(*t) > window) {
            h.pop_front();
        }
    }

    /// Core AS: one fresh intra-ISD beacon per live customer link (and per ISD
    /// the AS is core in that the customer belongs to).
    pub fn originate_intra(&self, view: &AsView<'_>) -> Vec<Emission> {
        let me = view.me();
        let Ok(node) = view.topo.node(me) else {
            return Vec::new();
        };
        let peers = view.live_peers();
        let mut out = Vec::new();
        for n in view.topo.customers(me).unwrap_or_default() {
            if !(view.link_up)(n.local_if.value()) {
                continue;
            }
            for &isd in &node.core_in {
                if !view.topo.is_member(n.remote, isd) {
                    continue;
                }
                if let Ok(pcb) = Pcb::originate(PcbKind::Intra, isd, view.now, &view.signer, n.local_if.value(), &peers) {
                    out.push(Emission {
                        egress: n.local_if.value(),
                        pcb,
                    });
                }
            }
        }
        out
    }

    /// Core AS: one fresh core beacon per live core link.
    pub fn originate_core(&self, view: &AsView<'_>) -> Vec<Emission> {
        let me = view.me();
        let Some(isd) = view.topo.node(me).ok().and_then(|n| n.core_in.iter().next().copied()) else {
            return Vec::new();
        };
        view.topo
            .neighbors(me, LinkType::Core)
            .unwrap_or_default()
            .into_iter()
            .filter(|n| (view.link_up)(n.local_if.value()))
            .filter_map(|n| {
                Pcb::originate(PcbKind::Core, isd, view.now, &view.signer, n.local_if.value(), &[])
                    .ok()
                    .map(|pcb| Emission {
                        egress: n.local_if.value(),
                        pcb,
                    })
            })
            .collect()
    }

    /// Non-core AS: on every live customer link send up to `k_intra`
    /// extensions of eligible pool entries.
    pub fn propagate_intra(&mut self, view: &AsView<'_>) -> (Vec<Emission>, Vec<LinkRound>) {
        self.prune(view.now);
        let me = view.me();
        let peers = view.live_peers();
        let window = view.policy.interval_intra + view.policy.interval_intra + view.policy.interval_intra;
        let mut out = Vec::new();
        let mut stats = Vec::new();
        for n in view.topo.customers(me).unwrap_or_default() {
            let egress = n.local_if.value();
            if !(view.link_up)(egress) {
                continue;
            }
            let eligible: Vec<&PoolEntry> = self
                .pool
                .iter()
                .filter(|(k, e)| {
                    k.0 == PcbKind::Intra
                        && view.topo.is_member(n.remote, e.pcb.info.isd)
                        && !e.pcb.contains_as(n.remote)
                })
                .map(|(_, e)| e)
                .collect();
            let cands: Vec<Candidate<'_>> = eligible
                .iter()
                .map(|e| Candidate {
                    pcb: &e.pcb,
                    consistent: view.consistent(&e.pcb, Some(egress)),
                })
                .collect();
            let history: Vec<BTreeSet<HopKey>> = self
                .history
                .get(&egress)
                .map(|h| h.iter().map(|(_, s)| s.clone()).collect())
                .unwrap_or_default();
            let picked = select(
                &cands,
                &history,
                view.policy.k_intra,
                &view.policy.weights,
                view.now,
                view.policy.interval_intra,
            );
            let mut emitted = 0;
            let mut sent_sets = Vec::new();
            for i in picked {
                let e = eligible[i];
                if let Ok(pcb) = e.pcb.extend(&view.signer, e.ingress, egress, &peers) {
                    sent_sets.push(e.pcb.hop_set());
                    out.push(Emission { egress, pcb });
                    emitted += 1;
                }
            }
            stats.push(LinkRound {
                egress,
                eligible: eligible.len(),
                emitted,
            });
            for s in sent_sets {
                self.record_sent(egress, s, view.now, window);
            }
        }
        (out, stats)
    }

    /// Core AS: on every live core link send up to `k_inter` extensions per
    /// origin. With `only_changed`, a (link, origin) selection is sent only if
    /// it differs from what was last sent there.
    pub fn propagate_core(&mut self, view: &AsView<'_>, only_changed: bool) -> Vec<Emission> {
        self.prune(view.now);
        let me = view.me();
        let mut out = Vec::new();
        for n in view.topo.neighbors(me, LinkType::Core).unwrap_or_default() {
            let egress = n.local_if.value();
            if !(view.link_up)(egress) {
                continue;
            }
            let mut by_origin: BTreeMap<AsId, Vec<&PoolEntry>> = BTreeMap::new();
            for (k, e) in &self.pool {
                if k.0 == PcbKind::Core && !e.pcb.contains_as(n.remote) {
                    by_origin.entry(e.pcb.info.origin).or_default().push(e);
                }
            }
            for (origin, entries) in by_origin {
                let cands: Vec<Candidate<'_>> = entries
                    .iter()
                    .map(|e| Candidate {
                        pcb: &e.pcb,
                        consistent: view.consistent(&e.pcb, Some(egress)),
                    })
                    .collect();
                let history: Vec<BTreeSet<HopKey>> = self
                    .history
                    .get(&egress)
                    .map(|h| h.iter().map(|(_, s)| s.clone()).collect())
                    .unwrap_or_default();
                let picked = select(
                    &cands,
                    &history,
                    view.policy.k_inter,
                    &view.policy.weights,
                    view.now,
                    view.policy.interval_inter,
                );
                let mut ids: Vec<Vec<HopKey>> = picked.iter().map(|&i| entries[i].pcb.identity()).collect();
                ids.sort();
                if only_changed && self.core_sent.get(&(egress, origin)) == Some(&ids) {
                    continue;
                }
                for &i in &picked {
                    let e = entries[i];
                    if let Ok(pcb) = e.pcb.extend(&view.signer, e.ingress, egress, &[]) {
                        out.push(Emission { egress, pcb });
                    }
                }
                self.core_sent.insert((egress, origin), ids);
            }
        }
        let window = view.policy.interval_inter + view.policy.interval_inter + view.policy.interval_inter;
        for e in &out {
            let set = e.pcb.hops[..e.pcb.hops.len() - 1].iter().map(|h| (h.as_id, h.ingress, h.egress)).collect();
            self.record_sent(e.egress, set, view.now, window);
        }
        out
    }

    /// Rank pool entries of `kind` for registration. Freshness is left out
    /// so that periodic refreshes do not reshuffle the set.
    fn registration_choice(&self, view: &AsView<'_>, kind: PcbKind) -> Vec<&PoolEntry> {
        let k = match kind {
            PcbKind::Intra => view.policy.k_intra,
            PcbKind::Core => view.policy.k_inter,
        };
        let w = view.policy.weights;
        let weights = [w[0], w[1], 0.0, w[3]];
        let mut groups: BTreeMap<AsId, Vec<&PoolEntry>> = BTreeMap::new();
        for (key, e) in &self.pool {
            if key.0 == kind {
                let group = if kind == PcbKind::Core { e.pcb.info.origin } else { view.me() };
                groups.entry(group).or_default().push(e);
            }
        }
        let mut chosen = Vec::new();
        for (_, mut entries) in groups {
            entries.sort_by_key(|e| (e.pcb.info.origin, e.pcb.identity()));
            // Equal-score ties fall back to the sort above through a shared timestamp.
            let stripped: Vec<Pcb> = entries
                .iter()
                .map(|e| {
                    let mut p = e.pcb.clone();
                    p.info.timestamp = 0;
                    p.info.origin = AsId::new(1, 0);
                    p
                })
                .collect();
            let cands: Vec<Candidate<'_>> = stripped
                .iter()
                .zip(&entries)
                .map(|(p, e)| Candidate {
                    pcb: p,
                    consistent: view.consistent(&e.pcb, None),
                })
                .collect();
            for i in select(&cands, &[], k, &weights, SimTime::ZERO, view.policy.interval_intra) {
                chosen.push(entries[i]);
            }
        }
        chosen
    }

    /// Decide which segments to (re-)register. A segment is uploaded when it
    /// is newly selected or its registered copy is within a quarter of its
    /// lifetime of expiring.
    pub fn registration_round(&mut self, view: &AsView<'_>, kind: PcbKind) -> Registrations {
        self.prune(view.now);
        let peers = if kind == PcbKind::Intra { view.live_peers() } else { Vec::new() };
        let chosen: Vec<PoolEntry> = self.registration_choice(view, kind).into_iter().cloned().collect();
        let mut out = Registrations {
            segments: Vec::new(),
            selected: chosen.len(),
        };
        for e in chosen {
            let id = e.pcb.identity();
            let lifetime = e.pcb.expiry().saturating_sub(e.pcb.info.created());
            let refresh = SimTime::from_micros(lifetime.as_micros() / 4);
            let due = match self.registered.get(&id) {
                None => true,
                Some(&exp) => exp.saturating_sub(view.now) < refresh,
            };
            if !due {
                continue;
            }
            if let Ok(seg) = e.pcb.extend(&view.signer, e.ingress, 0, &peers) {
                self.registered.insert(id, seg.expiry());
                out.segments.push(seg);
            }
        }
        out
    }

    /// Terminated copies of every pooled beacon of `kind`, without selection.
    pub fn all_terminated(&self, view: &AsView<'_>, kind: PcbKind) -> Vec<Pcb> {
        let peers = if kind == PcbKind::Intra { view.live_peers() } else { Vec::new() };
        self.pool
            .iter()
            .filter(|(k, _)| k.0 == kind)
            .filter_map(|(_, e)| e.pcb.extend(&view.signer, e.ingress, 0, &peers).ok())
            .collect()
    }

    /// AS sequences (origin first, this AS last) of pooled beacons of `isd`.
    pub fn pooled_sequences(&self, kind: PcbKind, isd: Option<IsdId>) -> BTreeSet<Vec<AsId>> {
        let me = self.as_id;
        self.pool
            .iter()
            .filter(|(k, e)| k.0 == kind && isd.is_none_or(|i| e.pcb.info.isd == i))
            .map(|(_, e)| {
                let mut seq = e.pcb.ases();
                seq.extend(me);
                seq
            })
            .collect()
    }
}
