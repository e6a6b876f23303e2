use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::messages::PsMessage;
use super::segment::PathSegment;
use super::store::{rank_key, Insert, SegmentStore};
use crate::beaconing::{Pcb, PcbInvalid, Verdict};
use crate::dataplane::{ScmpMessage, ScmpReject, SegmentKind};
use crate::time::SimTime;
use crate::topology::{AsId, Topology};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LookupReply {
    pub up: Vec<PathSegment>,
    pub core: Vec<PathSegment>,
    pub down: Vec<PathSegment>,
}

impl LookupReply {
    pub fn segments(&self) -> impl Iterator<Item = &PathSegment> {
        self.up.iter().chain(&self.core).chain(&self.down)
    }

    pub fn is_empty(&self) -> bool {
        self.up.is_empty() && self.core.is_empty() && self.down.is_empty()
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum LookupError {
    #[error("isolated: {0} has no up-segment")]
    Isolated(AsId),
    #[error("no such AS {0}")]
    NoSuchAs(AsId),
    #[error("lookup timeout for {0}")]
    Timeout(AsId),
}

impl LookupError {
    pub fn as_str(self) -> &'static str {
        match self {
            LookupError::Isolated(_) => "isolated",
            LookupError::NoSuchAs(_) => "no-such-as",
            LookupError::Timeout(_) => "timeout",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LookupOutcome {
    pub reply: LookupReply,
    pub messages: u64,
    pub bytes: u64,
    pub latency: SimTime,
    pub cache_hit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Rejection {
    Invalid(PcbInvalid),
    /// Wrong direction, wrong registrar, or not terminated.
    Orientation,
    /// Uses an interface revoked after the beacon was created.
    Revoked,
    /// Announces a TRC version this server does not hold.
    StaleTrc,
}

impl Rejection {
    pub fn as_str(self) -> &'static str {
        match self {
            Rejection::Invalid(r) => r.as_str(),
            Rejection::Orientation => "orientation",
            Rejection::Revoked => "revoked",
            Rejection::StaleTrc => "stale-trc",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RegisterOutcome {
    pub accepted: usize,
    /// Accepted segments that changed the store (new, refreshed or evicting).
    pub changed: usize,
    pub rejected: Vec<Rejection>,
}

#[derive(Debug, Clone)]
struct CacheEntry {
    reply: LookupReply,
    deps: Vec<(AsId, u64)>,
    reach: Vec<(AsId, AsId, bool)>,
    expires: SimTime,
}

/// Path server of one AS. Non-core servers use `up`; core servers use
/// `down` (keyed by leaf) and `core` (keyed by the remote core).
#[derive(Debug, Clone)]
pub struct PathServer {
    pub as_id: AsId,
    pub up: SegmentStore,
    pub down: SegmentStore,
    pub core: SegmentStore,
    revoked: BTreeMap<(AsId, u16), SimTime>,
    generation: u64,
    local_cache: BTreeMap<AsId, CacheEntry>,
    remote_cache: BTreeMap<(AsId, AsId), (Vec<PathSegment>, u64)>,
}

fn revoked_use(pcb: &Pcb, revoked: &BTreeMap<(AsId, u16), SimTime>) -> bool {
    revoked
        .iter()
        .any(|(&(a, i), &at)| pcb.info.created() <= at && pcb.uses_interface(a, i))
}

impl PathServer {
    pub fn new(as_id: AsId) -> Self {
        Self::with_capacity(as_id, super::store::STORE_CAPACITY)
    }

    /// A server keeping at most `capacity` segments per key and store.
    pub fn with_capacity(as_id: AsId, capacity: usize) -> Self {
        PathServer {
            as_id,
            up: SegmentStore::new(capacity),
            down: SegmentStore::new(capacity),
            core: SegmentStore::new(capacity),
            revoked: BTreeMap::new(),
            generation: 0,
            local_cache: BTreeMap::new(),
            remote_cache: BTreeMap::new(),
        }
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn stored(&self) -> impl Iterator<Item = &PathSegment> {
        self.up
            .iter()
            .chain(self.down.iter())
            .chain(self.core.iter())
            .map(|(_, s)| s)
    }

    /// Validate and store segments uploaded to this server. `kind` says which
    /// store they go to: up (own segments), down (registered at the origin
    /// core) or core (own core segments).
    pub fn register(
        &mut self,
        kind: SegmentKind,
        pcbs: Vec<Pcb>,
        topo: &Topology,
        now: SimTime,
        validate: &mut dyn FnMut(&Pcb) -> Verdict,
    ) -> RegisterOutcome {
        let mut out = RegisterOutcome::default();
        for pcb in pcbs {
            let seg = match kind {
                SegmentKind::Up => PathSegment::up(pcb),
                SegmentKind::Down => PathSegment::down(pcb),
                SegmentKind::Core => PathSegment::core(pcb),
            };
            let (registrar, key) = match kind {
                SegmentKind::Down => (seg.origin(), seg.leaf()),
                _ => (seg.leaf(), seg.origin()),
            };
            if !seg.pcb.is_terminated() || registrar != self.as_id || !seg.orientation_ok(topo) {
                out.rejected.push(Rejection::Orientation);
                continue;
            }
            if revoked_use(&seg.pcb, &self.revoked) {
                out.rejected.push(Rejection::Revoked);
                continue;
            }
            match validate(&seg.pcb) {
                Verdict::Valid => {}
                Verdict::Invalid(r) => {
                    out.rejected.push(Rejection::Invalid(r));
                    continue;
                }
                Verdict::StaleTrc { .. } => {
                    out.rejected.push(Rejection::StaleTrc);
                    continue;
                }
            }
            let store = match kind {
                SegmentKind::Up => &mut self.up,
                SegmentKind::Down => &mut self.down,
                SegmentKind::Core => &mut self.core,
            };
            match store.insert(key, seg, now) {
                Insert::Added | Insert::Replaced | Insert::Evicted => {
                    out.accepted += 1;
                    out.changed += 1;
                }
                Insert::Ignored => out.accepted += 1,
                Insert::Expired => out.rejected.push(Rejection::Invalid(PcbInvalid::Expired)),
            }
        }
        if out.changed > 0 {
            self.generation += 1;
        }
        out
    }

    /// Drop every stored and cached segment using the interface and refuse
    /// older beacons that use it. Returns the number of stored segments
    /// removed.
    pub fn revoke(&mut self, as_id: AsId, interface: u16, at: SimTime) -> usize {
        let prev = self.revoked.entry((as_id, interface)).or_insert(at);
        *prev = (*prev).max(at);
        let n = self.up.purge_interface(as_id, interface)
            + self.down.purge_interface(as_id, interface)
            + self.core.purge_interface(as_id, interface);
        self.local_cache
            .retain(|_, e| !e.reply.segments().any(|s| s.uses_interface(as_id, interface)));
        self.remote_cache
            .retain(|_, (segs, _)| !segs.iter().any(|s| s.uses_interface(as_id, interface)));
        self.generation += 1;
        n
    }

    /// Authenticate a revocation notice with `verify`, then apply it. A
    /// notice that fails authentication changes nothing.
    pub fn process_revocation(
        &mut self,
        notice: &ScmpMessage,
        verify: impl FnOnce(&ScmpMessage) -> Result<(), ScmpReject>,
    ) -> Result<usize, ScmpReject> {
        verify(notice)?;
        let Some((as_id, interface)) = notice.subject else {
            return Ok(0);
        };
        if as_id != notice.issuer {
            return Err(ScmpReject::BadTag);
        }
        Ok(self.revoke(as_id, interface.value(), notice.timestamp))
    }

    /// Revoked interfaces with the time of revocation. Beacons created
    /// later may use the interface again.
    pub fn revoked(&self) -> &BTreeMap<(AsId, u16), SimTime> {
        &self.revoked
    }
}

/// Latency and reachability seen by lookups.
pub struct NetEnv<'a> {
    pub topo: &'a Topology,
    /// Live inter-AS hop distance; `None` if unreachable.
    pub distance: &'a dyn Fn(AsId, AsId) -> Option<u32>,
    pub link_latency: SimTime,
}

impl NetEnv<'_> {
    fn round_trip(&self, hops: u32) -> SimTime {
        SimTime::from_micros(2 * hops as u64 * self.link_latency.as_micros())
    }
}

/// All path servers of the simulated network.
#[derive(Debug, Clone)]
pub struct PathServiceNet {
    pub servers: BTreeMap<AsId, PathServer>,
    pub caching: bool,
    /// Per-category reply limit; `None` returns everything.
    pub k: Option<usize>,
}

fn finish(mut segs: Vec<PathSegment>, k: Option<usize>) -> Vec<PathSegment> {
    segs.sort_by_cached_key(rank_key);
    let mut seen = BTreeSet::new();
    segs.retain(|s| seen.insert((s.kind, s.pcb.identity())));
    if let Some(k) = k {
        segs.truncate(k);
    }
    segs
}

impl PathServiceNet {
    pub fn new(topo: &Topology) -> Self {
        Self::with_capacity(topo, super::store::STORE_CAPACITY)
    }

    pub fn with_capacity(topo: &Topology, capacity: usize) -> Self {
        PathServiceNet {
            servers: topo.ases.keys().map(|&a| (a, PathServer::with_capacity(a, capacity))).collect(),
            caching: true,
            k: Some(5),
        }
    }

    pub fn server(&self, as_id: AsId) -> &PathServer {
        &self.servers[&as_id]
    }

    pub fn server_mut(&mut self, as_id: AsId) -> &mut PathServer {
        self.servers.get_mut(&as_id).expect("server exists for every AS")
    }

    fn generation(&self, as_id: AsId) -> u64 {
        self.servers.get(&as_id).map_or(0, |s| s.generation)
    }

    /// Resolve segments for a host in `src` that wants to reach `dst`.
    pub fn lookup(
        &mut self,
        src: AsId,
        dst: AsId,
        now: SimTime,
        env: &NetEnv<'_>,
    ) -> Result<LookupOutcome, LookupError> {
        let topo = env.topo;
        for a in [src, dst] {
            if !topo.contains(a) {
                return Err(LookupError::NoSuchAs(a));
            }
        }
        let empty = LookupOutcome {
            reply: LookupReply::default(),
            messages: 0,
            bytes: 0,
            latency: SimTime::ZERO,
            cache_hit: false,
        };
        if src == dst {
            return Ok(empty);
        }
        let src_core = topo.is_core(src);
        let server = self.server(src);
        let ups: Vec<PathSegment> = if src_core {
            Vec::new()
        } else {
            let all = server.up.keys().flat_map(|c| server.up.get(c, now)).cloned().collect();
            finish(all, self.k)
        };
        if !src_core && ups.is_empty() {
            return Err(LookupError::Isolated(src));
        }

        if self.caching {
            if let Some(e) = server.local_cache.get(&dst) {
                let fresh = e.expires > now
                    && e.deps.iter().all(|&(a, g)| self.generation(a) == g)
                    && e.reach.iter().all(|&(a, b, r)| (env.distance)(a, b).is_some() == r);
                if fresh {
                    return Ok(LookupOutcome {
                        reply: e.reply.clone(),
                        cache_hit: true,
                        ..empty
                    });
                }
            }
        }

        let mut up_cores: Vec<AsId> = Vec::new();
        if src_core {
            up_cores.push(src);
        }
        for u in &ups {
            if !up_cores.contains(&u.origin()) {
                up_cores.push(u.origin());
            }
        }
        let dst_core = topo.is_core(dst);
        let targets: Vec<AsId> = if dst_core {
            vec![dst]
        } else {
            let node = topo.node(dst).expect("checked");
            let mut t: BTreeSet<AsId> = BTreeSet::new();
            for &isd in &node.member_of {
                t.extend(topo.core_ases(isd));
            }
            t.into_iter().collect()
        };

        let mut out = empty;
        let mut deps = vec![(src, self.generation(src))];
        let mut reach = Vec::new();
        let mut down = Vec::new();
        let mut core = Vec::new();
        let mut reached = false;
        let request_len = PsMessage::Request { src, dst }.encode().len() as u64;

        for c in up_cores {
            if c != src {
                let d = (env.distance)(src, c);
                reach.push((src, c, d.is_some()));
                let Some(d) = d else { continue };
                out.latency = out.latency + env.round_trip(d);
            }
            deps.push((c, self.generation(c)));
            let mut c_down: Vec<PathSegment> = Vec::new();
            let mut c_core: Vec<PathSegment> = Vec::new();
            let mut order: Vec<(usize, AsId)> = targets
                .iter()
                .map(|&t| {
                    let best = if t == c {
                        0
                    } else {
                        self.server(c).core.get(t, now).first().map_or(usize::MAX, |s| s.hop_count())
                    };
                    (best, t)
                })
                .collect();
            order.sort();
            for (best, t) in order {
                if t == c {
                    reached = true;
                    if !dst_core {
                        c_down.extend(self.server(c).down.get(dst, now).into_iter().cloned());
                    }
                    continue;
                }
                if best == usize::MAX {
                    continue;
                }
                c_core.extend(self.server(c).core.get(t, now).into_iter().cloned());
                if dst_core {
                    reached = true;
                    continue;
                }
                let d = (env.distance)(c, t);
                reach.push((c, t, d.is_some()));
                let Some(d) = d else { continue };
                reached = true;
                let gen_t = self.generation(t);
                deps.push((t, gen_t));
                let cached = self
                    .caching
                    .then(|| self.server(c).remote_cache.get(&(t, dst)))
                    .flatten()
                    .filter(|(segs, g)| *g == gen_t && segs.iter().all(|s| s.expiry() > now))
                    .map(|(segs, _)| segs.clone());
                let segs = match cached {
                    Some(s) => s,
                    None => {
                        let s: Vec<PathSegment> = self.server(t).down.get(dst, now).into_iter().cloned().collect();
                        out.messages += 2;
                        out.bytes += request_len + PsMessage::Reply { segments: s.clone() }.encode().len() as u64;
                        out.latency = out.latency + env.round_trip(d);
                        if self.caching {
                            self.server_mut(c).remote_cache.insert((t, dst), (s.clone(), gen_t));
                        }
                        s
                    }
                };
                c_down.extend(segs);
            }
            if c != src {
                out.messages += 2;
                let mut answer = c_core.clone();
                answer.extend(c_down.iter().cloned());
                out.bytes += request_len + PsMessage::Reply { segments: answer }.encode().len() as u64;
            }
            down.extend(c_down);
            core.extend(c_core);
        }
        if !reached {
            return Err(LookupError::Timeout(dst));
        }
        out.reply = LookupReply {
            up: ups,
            core: finish(core, self.k),
            down: finish(down, self.k),
        };
        if self.caching {
            if let Some(expires) = out.reply.segments().map(PathSegment::expiry).min() {
                let entry = CacheEntry {
                    reply: out.reply.clone(),
                    deps,
                    reach,
                    expires,
                };
                self.server_mut(src).local_cache.insert(dst, entry);
            }
        }
        Ok(out)
    }

    /// Every segment currently stored at any server, with its server.
    pub fn all_segments(&self) -> impl Iterator<Item = (AsId, &PathSegment)> {
        self.servers
            .iter()
            .flat_map(|(&a, s)| s.stored().map(move |seg| (a, seg)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beaconing::{validate_pcb, DirectoryCerts};
    use crate::dataplane::scmp_auth;
    use crate::sim::world::World;
    use crate::testkit::{core_seg, down_seg, fig, fig_world, names, up_seg};
    use crate::topology::InterfaceId;

    const T0: SimTime = SimTime::from_secs(1000);

    fn register(w: &World, ps: &mut PathServer, kind: SegmentKind, segs: Vec<PathSegment>, now: SimTime) -> RegisterOutcome {
        let trcs = w.bootstrap_store();
        let mut verified = BTreeSet::new();
        let mut certs = DirectoryCerts {
            certs: &w.certs,
            trcs: &trcs,
            verified: &mut verified,
        };
        let pcbs = segs.into_iter().map(|s| s.pcb).collect();
        ps.register(kind, pcbs, &w.topo, now, &mut |p| validate_pcb(p, &w.topo, &trcs, &mut certs, now))
    }

    fn y_downs(w: &World) -> Vec<PathSegment> {
        ["Y F", "Y F B", "Y F C", "Y G", "Y G C", "Y D"]
            .iter()
            .map(|p| down_seg(w, p, T0))
            .collect()
    }

    #[test]
    fn valid_registrations_accepted() {
        let w = fig_world();
        let mut y = PathServer::new(fig("Y"));
        let out = register(&w, &mut y, SegmentKind::Down, y_downs(&w)[..5].to_vec(), T0 + SimTime::from_secs(1));
        assert_eq!(out.accepted, 5);
        assert!(out.rejected.is_empty());
        assert_eq!(y.down.len(), 5);
        assert_eq!(y.generation(), 1);
    }

    #[test]
    fn wrong_registrar_and_expired_rejected() {
        let w = fig_world();
        let mut x = PathServer::new(fig("X"));
        let out = register(&w, &mut x, SegmentKind::Down, vec![down_seg(&w, "Y D", T0)], T0);
        assert_eq!(out.rejected, vec![Rejection::Orientation]);

        let mut y = PathServer::new(fig("Y"));
        // Default expiry is 169 units of 256 s.
        let late = T0 + SimTime::from_secs(169 * 256);
        let out = register(&w, &mut y, SegmentKind::Down, vec![down_seg(&w, "Y D", T0)], late);
        assert_eq!(out.accepted, 0);
        assert_eq!(out.rejected, vec![Rejection::Invalid(PcbInvalid::Expired)]);
        assert_eq!(y.generation(), 0);
    }

    #[test]
    fn tampered_segment_rejected() {
        let w = fig_world();
        let mut y = PathServer::new(fig("Y"));
        let mut s = down_seg(&w, "Y F B", T0);
        s.pcb.hops[1].of.mac ^= 1;
        let out = register(&w, &mut y, SegmentKind::Down, vec![s], T0);
        assert_eq!(out.rejected, vec![Rejection::Invalid(PcbInvalid::Signature)]);
    }

    #[test]
    fn revocation_purges_only_affected_segments() {
        let w = fig_world();
        let mut y = PathServer::new(fig("Y"));
        register(&w, &mut y, SegmentKind::Down, y_downs(&w), T0);
        assert_eq!(y.down.len(), 6);
        let f_in = InterfaceId::new(down_seg(&w, "Y F", T0).pcb.hops[1].ingress).unwrap();
        let at = T0 + SimTime::from_secs(5);

        let forged = ScmpMessage::revoke(fig("F"), f_in, at);
        let r = y.process_revocation(&forged, |_| Err(ScmpReject::BadTag));
        assert_eq!(r, Err(ScmpReject::BadTag));
        assert_eq!(y.down.len(), 6);

        let notice = scmp_auth(&w.secrets[&fig("F")], ScmpMessage::revoke(fig("F"), f_in, at), fig("Y"));
        let r = y.process_revocation(&notice, |m| {
            if m.tag == m.tag_with(&crate::crypto::derive_drkey(&w.secrets[&fig("F")], fig("Y"))) {
                Ok(())
            } else {
                Err(ScmpReject::BadTag)
            }
        });
        assert_eq!(r, Ok(3));
        assert_eq!(y.down.len(), 3);
        assert!(y.stored().all(|s| !s.uses_interface(fig("F"), f_in.value())));

        let unknown = ScmpMessage::revoke(fig("F"), InterfaceId::new(999).unwrap(), at);
        assert_eq!(y.process_revocation(&unknown, |_| Ok(())), Ok(0));

        // Beacons created before the revocation stay out; later ones return.
        let out = register(&w, &mut y, SegmentKind::Down, vec![down_seg(&w, "Y F B", T0)], at);
        assert_eq!(out.rejected, vec![Rejection::Revoked]);
        let fresh = down_seg(&w, "Y F B", at + SimTime::from_secs(1));
        let out = register(&w, &mut y, SegmentKind::Down, vec![fresh], at + SimTime::from_secs(2));
        assert_eq!(out.accepted, 1);
    }

    #[test]
    fn notice_about_someone_else_is_refused() {
        let w = fig_world();
        let mut y = PathServer::new(fig("Y"));
        register(&w, &mut y, SegmentKind::Down, y_downs(&w), T0);
        let mut m = ScmpMessage::revoke(fig("F"), InterfaceId::new(1).unwrap(), T0);
        m.issuer = fig("G");
        assert_eq!(y.process_revocation(&m, |_| Ok(())), Err(ScmpReject::BadTag));
        assert_eq!(y.down.len(), 6);
    }

    /// The fig network with every intra-ISD and core segment registered.
    fn populated(w: &World) -> PathServiceNet {
        let mut net = PathServiceNet::new(&w.topo);
        let now = T0;
        let ups = [("B", "Y F B"), ("C", "Y F C"), ("C", "Y G C"), ("A", "X E A"), ("D", "Y D"), ("E", "X E"), ("F", "Y F"), ("G", "Y G")];
        for (at, p) in ups {
            register(w, net.server_mut(fig(at)), SegmentKind::Up, vec![up_seg(w, p, now)], now);
        }
        register(w, net.server_mut(fig("Y")), SegmentKind::Down, y_downs(w), now);
        let xd: Vec<PathSegment> = ["X E", "X E A"].iter().map(|p| down_seg(w, p, now)).collect();
        register(w, net.server_mut(fig("X")), SegmentKind::Down, xd, now);
        register(w, net.server_mut(fig("4-1")), SegmentKind::Down, vec![down_seg(w, "4-1 I", now)], now);
        let cores = [("Y", "X Y"), ("X", "Y X"), ("4-1", "1-1 2-1 4-1"), ("1-1", "4-1 2-1 1-1"), ("1-1", "4-1 3-1 2-1 1-1")];
        for (at, p) in cores {
            let out = register(w, net.server_mut(fig(at)), SegmentKind::Core, vec![core_seg(w, p, now)], now);
            assert_eq!(out.accepted, 1, "{p}");
        }
        net
    }

    fn env<'a>(w: &'a World, dist: &'a dyn Fn(AsId, AsId) -> Option<u32>) -> NetEnv<'a> {
        NetEnv {
            topo: &w.topo,
            distance: dist,
            link_latency: SimTime::from_millis(10),
        }
    }

    #[test]
    fn lookup_within_isd() {
        let w = fig_world();
        let mut net = populated(&w);
        let dist = |a, b| w.topo.hop_distance(a, b, |_| true);
        let e = env(&w, &dist);
        let out = net.lookup(fig("B"), fig("D"), T0, &e).unwrap();
        assert_eq!(out.reply.up.iter().map(|s| s.ases()).collect::<Vec<_>>(), vec![names("B F Y")]);
        assert_eq!(out.reply.down.iter().map(|s| s.ases()).collect::<Vec<_>>(), vec![names("Y D")]);
        assert!(!out.cache_hit);
        // Y answers, and Y fetches from X (which has nothing for D).
        assert_eq!(out.messages, 4);
        assert!(out.bytes > 0);

        let again = net.lookup(fig("B"), fig("D"), T0, &e).unwrap();
        assert!(again.cache_hit);
        assert_eq!(again.messages, 0);
        assert_eq!(again.reply, out.reply);
    }

    #[test]
    fn lookup_across_isds() {
        let w = fig_world();
        let mut net = populated(&w);
        let dist = |a, b| w.topo.hop_distance(a, b, |_| true);
        let out = net.lookup(fig("A"), fig("I"), T0, &env(&w, &dist)).unwrap();
        assert_eq!(out.reply.up.len(), 1);
        let cores: Vec<Vec<AsId>> = out.reply.core.iter().map(|s| s.ases()).collect();
        assert_eq!(cores[0], names("1-1 2-1 4-1"));
        assert_eq!(out.reply.down[0].ases(), names("4-1 I"));
        assert!(!crate::combiner::combine(&out.reply.up, &out.reply.core, &out.reply.down, fig("A"), fig("I"), &w.topo).is_empty());
    }

    #[test]
    fn lookup_errors_and_trivial_cases() {
        let w = fig_world();
        let mut net = populated(&w);
        let dist = |a, b| w.topo.hop_distance(a, b, |_| true);
        let e = env(&w, &dist);
        let out = net.lookup(fig("D"), fig("D"), T0, &e).unwrap();
        assert!(out.reply.is_empty());
        assert_eq!(out.messages, 0);
        assert_eq!(net.lookup(fig("B"), AsId::new(9, 9), T0, &e), Err(LookupError::NoSuchAs(AsId::new(9, 9))));
        // 2-10 registered nothing.
        assert_eq!(net.lookup(fig("2-10"), fig("B"), T0, &e), Err(LookupError::Isolated(fig("2-10"))));
        let none = |_, _| None;
        assert_eq!(net.lookup(fig("B"), fig("A"), T0, &env(&w, &none)), Err(LookupError::Timeout(fig("A"))));
    }

    #[test]
    fn cache_is_transparent() {
        let w = fig_world();
        let dist = |a, b| w.topo.hop_distance(a, b, |_| true);
        let e = env(&w, &dist);
        let mut cached = populated(&w);
        let mut plain = populated(&w);
        plain.caching = false;
        let pairs = [("B", "D"), ("A", "I"), ("C", "A"), ("B", "D"), ("A", "I")];
        let f_in = down_seg(&w, "Y F", T0).pcb.hops[1].ingress;
        for round in 0..3 {
            let now = T0 + SimTime::from_secs(round * 10);
            for (s, d) in pairs {
                let a = cached.lookup(fig(s), fig(d), now, &e).map(|o| o.reply);
                let b = plain.lookup(fig(s), fig(d), now, &e).map(|o| o.reply);
                assert_eq!(a, b, "{s}->{d} round {round}");
            }
            if round == 1 {
                for net in [&mut cached, &mut plain] {
                    for a in ["Y", "B", "C"] {
                        net.server_mut(fig(a)).revoke(fig("F"), f_in, now);
                    }
                }
            }
        }
    }

    #[test]
    fn reply_limit_per_category() {
        let w = fig_world();
        let mut net = populated(&w);
        net.k = Some(1);
        let dist = |a, b| w.topo.hop_distance(a, b, |_| true);
        let out = net.lookup(fig("A"), fig("I"), T0, &env(&w, &dist)).unwrap();
        assert_eq!(out.reply.core.len(), 1);
    }
}
