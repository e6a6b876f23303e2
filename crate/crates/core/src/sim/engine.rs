//! Discrete-event engine. Every AS runs a beacon server, a path server and a
//! border router; events are processed in (time, sequence) order.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::flow::{FlowState, PacketTag};
use super::metrics::Metrics;
use super::scenario::{Attack, Directive, Scenario, TrcFixture, Tunables};
use super::world::{stream, World};
use crate::beaconing::{
    validate_pcb, AsView, BeaconPolicy, BeaconServer, DirectoryCerts, Emission, LinkRound, Pcb, PcbKind, Signer,
    Verdict,
};
use crate::combiner::{combine, EndToEndPath};
use crate::crypto::{derive_drkey, DrKey, DrKeyCache, DrKeyError, DrKeyRequest};
use crate::dataplane::{
    forward, scmp_auth, scmp_verify, Action, Arrival, HostAddr, Packet, RouterContext, ScmpMessage, SegmentKind,
};
use crate::path_service::{LookupError, LookupOutcome, NetEnv, PathServiceNet, Rejection};
use crate::time::SimTime;
use crate::topology::{AsId, InterfaceId, IsdId, LinkId, LinkType, Topology};
use crate::trust::{Trc, TrcStore};

/// Interface number used by forged beacons for links that do not exist.
const BOGUS_IF: u16 = 4000;

/// Per-AS control-plane state besides the path server.
#[derive(Debug, Clone)]
pub struct AsState {
    pub beacon: BeaconServer,
    pub trcs: TrcStore,
    verified: BTreeSet<(AsId, u32)>,
    pub drkeys: DrKeyCache,
    /// Beacons waiting for a TRC fetch: (pcb, ingress, sender).
    held: Vec<(Pcb, u16, AsId)>,
    fetching: BTreeSet<(IsdId, u32)>,
    flush_pending: bool,
}

/// One propagation decision on one link, for rate checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundRecord {
    pub tick: u64,
    pub time: SimTime,
    pub as_id: AsId,
    pub link: LinkId,
    pub eligible: usize,
    pub emitted: usize,
}

#[derive(Debug, Clone)]
pub(crate) enum Event {
    IntraTick,
    CoreTick,
    CoreFlush(AsId),
    Pcb { to: AsId, from: AsId, ingress: u16, link: LinkId, pcb: Pcb },
    TrcFetched { at: AsId, from: AsId, isd: IsdId, version: u32 },
    Register { to: AsId, from: AsId, kind: SegmentKind, pcbs: Vec<Pcb> },
    Revocation { to: AsId, msg: ScmpMessage, forged: bool },
    Script(usize),
    FlowLookup(usize),
    FlowSend(usize),
    Packet { at: AsId, arrival: Arrival, pkt: Packet, tag: PacketTag },
    AckTimeout { flow: usize, seq: u64 },
}

pub struct Engine {
    pub world: World,
    pub tunables: Tunables,
    pub policy: BeaconPolicy,
    pub scenario: Scenario,
    pub ases: BTreeMap<AsId, AsState>,
    pub ps: PathServiceNet,
    pub down: BTreeSet<LinkId>,
    pub metrics: Metrics,
    pub flows: Vec<FlowState>,
    /// Offset of the first beacon tick.
    pub phase: SimTime,
    pub link_rounds: Vec<RoundRecord>,
    /// Time each AS first held each (ISD, TRC version).
    pub trc_installs: BTreeMap<(IsdId, u32), BTreeMap<AsId, SimTime>>,
    /// Time each TRC update was issued at the cores.
    pub trc_issued: BTreeMap<(IsdId, u32), SimTime>,
    queue: BTreeMap<(SimTime, u64), Event>,
    seq: u64,
    now: SimTime,
    tick: u64,
    adversaries: Vec<Attack>,
    rng: BTreeMap<String, ChaCha8Rng>,
    finished: Option<Metrics>,
}

fn label(r: Rejection) -> &'static str {
    r.as_str()
}

impl Engine {
    pub fn new(scenario: &Scenario) -> Engine {
        let world = World::generate(scenario.topology.clone(), scenario.seed, &scenario.trc_configs);
        let t = scenario.tunables.clone();
        let policy = BeaconPolicy {
            k_intra: t.k_intra,
            k_inter: t.k_inter,
            interval_intra: t.interval_intra,
            interval_inter: t.interval_inter,
            ..BeaconPolicy::default()
        };
        let store = world.bootstrap_store();
        let ases = world
            .topo
            .ases
            .keys()
            .map(|&a| {
                (
                    a,
                    AsState {
                        beacon: BeaconServer::new(a),
                        trcs: store.clone(),
                        verified: BTreeSet::new(),
                        drkeys: DrKeyCache::new(),
                        held: Vec::new(),
                        fetching: BTreeSet::new(),
                        flush_pending: false,
                    },
                )
            })
            .collect();
        let mut ps = PathServiceNet::with_capacity(&world.topo, t.ps_capacity.unwrap_or(usize::MAX));
        ps.k = t.ps_k;
        ps.caching = t.caching;
        let mut phase_rng = stream(scenario.seed, "beacon-phase");
        let phase_ms = phase_rng.gen_range(0..t.interval_intra.as_micros() / 1000);
        let mut trc_installs: BTreeMap<(IsdId, u32), BTreeMap<AsId, SimTime>> = BTreeMap::new();
        for &isd in &world.topo.isds {
            trc_installs.insert((isd, 1), world.topo.ases.keys().map(|&a| (a, SimTime::ZERO)).collect());
        }
        let mut e = Engine {
            flows: scenario.flows.iter().cloned().map(FlowState::new).collect(),
            world,
            tunables: t,
            policy,
            scenario: scenario.clone(),
            ases,
            ps,
            down: BTreeSet::new(),
            metrics: Metrics::new(),
            phase: SimTime::from_millis(phase_ms),
            link_rounds: Vec::new(),
            trc_installs,
            trc_issued: BTreeMap::new(),
            queue: BTreeMap::new(),
            seq: 0,
            now: SimTime::ZERO,
            tick: 0,
            adversaries: Vec::new(),
            rng: BTreeMap::new(),
            finished: None,
        };
        if scenario.duration > SimTime::ZERO {
            e.schedule(e.phase, Event::CoreTick);
            e.schedule(e.phase, Event::IntraTick);
            for i in 0..scenario.script.len() {
                e.schedule(scenario.script[i].at, Event::Script(i));
            }
            for (i, f) in scenario.flows.iter().enumerate() {
                e.schedule(f.start, Event::FlowLookup(i));
            }
        }
        e
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn topo(&self) -> &Topology {
        &self.world.topo
    }

    pub(crate) fn schedule(&mut self, at: SimTime, ev: Event) {
        let at = at.max(self.now);
        self.seq += 1;
        self.queue.insert((at, self.seq), ev);
    }

    fn rng(&mut self, name: &str) -> &mut ChaCha8Rng {
        let seed = self.scenario.seed;
        self.rng.entry(name.to_string()).or_insert_with(|| stream(seed, name))
    }

    pub fn link_is_up(&self, id: LinkId) -> bool {
        !self.down.contains(&id)
    }

    fn if_up(topo: &Topology, down: &BTreeSet<LinkId>, a: AsId, ifid: u16) -> bool {
        InterfaceId::new(ifid)
            .and_then(|i| topo.link_at(a, i))
            .is_some_and(|l| !down.contains(&l.id))
    }

    /// Live hop distance between two ASes.
    pub fn distance(&self, a: AsId, b: AsId) -> Option<u32> {
        self.world.topo.hop_distance(a, b, |l| !self.down.contains(&l))
    }

    fn latency_hops(&self, hops: u32) -> SimTime {
        if hops == 0 {
            self.tunables.intra_latency
        } else {
            SimTime::from_micros(hops as u64 * self.tunables.link_latency.as_micros())
        }
    }

    /// Process every event strictly before `until`.
    pub fn run_until(&mut self, until: SimTime) {
        let end = until.min(self.scenario.duration);
        while let Some(entry) = self.queue.first_entry() {
            let (t, _) = *entry.key();
            if t >= end {
                break;
            }
            let ev = entry.remove();
            self.now = t;
            self.handle(ev);
        }
        self.now = self.now.max(end);
    }

    /// Run to the end and return the final metrics.
    pub fn run(&mut self) -> Metrics {
        if let Some(m) = &self.finished {
            return m.clone();
        }
        if self.scenario.duration == SimTime::ZERO {
            self.finished = Some(Metrics::new());
            return Metrics::new();
        }
        self.run_until(self.scenario.duration);
        self.finish();
        self.finished.clone().expect("set by finish")
    }

    fn handle(&mut self, ev: Event) {
        match ev {
            Event::IntraTick => self.intra_tick(),
            Event::CoreTick => self.core_tick(),
            Event::CoreFlush(a) => self.core_flush(a),
            Event::Pcb { to, from, ingress, link, pcb } => {
                if self.down.contains(&link) {
                    self.metrics.inc("beacon.pcb.lost");
                    return;
                }
                self.metrics.inc("beacon.pcb.received");
                self.metrics.inc(format!("beacon.link.{link}.received"));
                self.receive_pcb(to, from, ingress, pcb);
            }
            Event::TrcFetched { at, from, isd, version } => self.trc_fetched(at, from, isd, version),
            Event::Register { to, from, kind, pcbs } => self.register(to, from, kind, pcbs),
            Event::Revocation { to, msg, forged } => self.revocation(to, msg, forged),
            Event::Script(i) => self.script(i),
            Event::FlowLookup(f) => self.flow_lookup(f),
            Event::FlowSend(f) => self.flow_send(f),
            Event::Packet { at, arrival, pkt, tag } => self.packet(at, arrival, pkt, tag),
            Event::AckTimeout { flow, seq } => self.ack_timeout(flow, seq),
        }
    }

    // ---- beaconing -------------------------------------------------------

    fn send_emissions(&mut self, from: AsId, em: Vec<Emission>) {
        for e in em {
            let Some(link) = InterfaceId::new(e.egress).and_then(|i| self.world.topo.link_at(from, i)) else {
                continue;
            };
            let (to, rif) = link.remote(from).expect("link touches sender");
            let id = link.id;
            self.metrics.inc("beacon.pcb.sent");
            self.metrics.inc(format!("beacon.link.{id}.sent"));
            let at = self.now + self.tunables.link_latency;
            self.schedule(
                at,
                Event::Pcb {
                    to,
                    from,
                    ingress: rif.value(),
                    link: id,
                    pcb: e.pcb,
                },
            );
        }
    }

    fn record_rounds(&mut self, a: AsId, stats: &[LinkRound]) {
        for s in stats {
            let Some(link) = InterfaceId::new(s.egress).and_then(|i| self.world.topo.link_at(a, i)) else {
                continue;
            };
            let want = self.policy.k_intra.map_or(s.eligible, |k| s.eligible.min(k));
            self.metrics.inc("beacon.rate.rounds");
            if s.emitted != want {
                self.metrics.inc("beacon.rate.violations");
            }
            self.link_rounds.push(RoundRecord {
                tick: self.tick,
                time: self.now,
                as_id: a,
                link: link.id,
                eligible: s.eligible,
                emitted: s.emitted,
            });
        }
    }

    /// Run `f` with a view of AS `a` and mutable access to its beacon server.
    fn with_view<R>(&mut self, a: AsId, f: impl FnOnce(&mut BeaconServer, &AsView<'_>) -> R) -> R {
        let Engine {
            world,
            policy,
            ases,
            down,
            now,
            ..
        } = self;
        let st = ases.get_mut(&a).expect("known AS");
        let topo = &world.topo;
        let up = |i: u16| Engine::if_up(topo, down, a, i);
        let view = AsView {
            topo,
            signer: Signer {
                secrets: &world.secrets[&a],
                trc_version: st.trcs.current_version(a.isd),
                cert_version: 1,
                expiry_units: policy.expiry_units,
            },
            policy,
            link_up: &up,
            now: *now,
        };
        f(&mut st.beacon, &view)
    }

    fn intra_tick(&mut self) {
        let ases: Vec<AsId> = self.world.topo.ases.keys().copied().collect();
        for &a in &ases {
            if self.world.topo.is_core(a) {
                let em = self.with_view(a, |b, v| b.originate_intra(v));
                let mut per_link: BTreeMap<u16, usize> = BTreeMap::new();
                for e in &em {
                    *per_link.entry(e.egress).or_default() += 1;
                }
                let stats: Vec<LinkRound> = per_link
                    .into_iter()
                    .map(|(egress, n)| LinkRound {
                        egress,
                        eligible: n,
                        emitted: n,
                    })
                    .collect();
                self.record_rounds(a, &stats);
                self.send_emissions(a, em);
            }
        }
        for &a in &ases {
            if !self.world.topo.is_core(a) {
                let (em, stats) = self.with_view(a, |b, v| b.propagate_intra(v));
                self.record_rounds(a, &stats);
                self.send_emissions(a, em);
            }
        }
        for &a in &ases {
            if self.world.topo.is_core(a) {
                continue;
            }
            let regs = self.with_view(a, |b, v| b.registration_round(v, PcbKind::Intra));
            if regs.segments.is_empty() {
                continue;
            }
            self.metrics.add("beacon.registrations", regs.segments.len() as u64);
            let mut by_origin: BTreeMap<AsId, Vec<Pcb>> = BTreeMap::new();
            for p in &regs.segments {
                by_origin.entry(p.info.origin).or_default().push(p.clone());
            }
            let at = self.now + self.tunables.intra_latency;
            self.schedule(
                at,
                Event::Register {
                    to: a,
                    from: a,
                    kind: SegmentKind::Up,
                    pcbs: regs.segments,
                },
            );
            for (origin, pcbs) in by_origin {
                let Some(d) = self.distance(a, origin) else {
                    self.metrics.inc("ps.register.unreachable");
                    continue;
                };
                let at = self.now + self.latency_hops(d);
                self.schedule(
                    at,
                    Event::Register {
                        to: origin,
                        from: a,
                        kind: SegmentKind::Down,
                        pcbs,
                    },
                );
            }
        }
        for adv in self.adversaries.clone() {
            self.adversary_round(&adv, PcbKind::Intra);
        }
        self.tick += 1;
        let next = self.now + self.tunables.interval_intra;
        self.schedule(next, Event::IntraTick);
    }

    fn core_tick(&mut self) {
        for a in self.world.topo.all_core_ases() {
            let em = self.with_view(a, |b, v| {
                let mut em = b.originate_core(v);
                em.extend(b.propagate_core(v, false));
                em
            });
            self.send_emissions(a, em);
            self.register_core(a);
        }
        for adv in self.adversaries.clone() {
            self.adversary_round(&adv, PcbKind::Core);
        }
        let next = self.now + self.tunables.interval_inter;
        self.schedule(next, Event::CoreTick);
    }

    fn core_flush(&mut self, a: AsId) {
        self.ases.get_mut(&a).expect("known AS").flush_pending = false;
        let em = self.with_view(a, |b, v| b.propagate_core(v, true));
        self.metrics.inc("beacon.core.immediate_rounds");
        self.send_emissions(a, em);
        self.register_core(a);
    }

    fn register_core(&mut self, a: AsId) {
        let regs = self.with_view(a, |b, v| b.registration_round(v, PcbKind::Core));
        if !regs.segments.is_empty() {
            self.metrics.add("beacon.registrations", regs.segments.len() as u64);
            let at = self.now + self.tunables.intra_latency;
            self.schedule(
                at,
                Event::Register {
                    to: a,
                    from: a,
                    kind: SegmentKind::Core,
                    pcbs: regs.segments,
                },
            );
        }
    }

    fn validate_at(&mut self, a: AsId, pcb: &Pcb) -> Verdict {
        let Engine { world, ases, now, .. } = self;
        let st = ases.get_mut(&a).expect("known AS");
        let mut certs = DirectoryCerts {
            certs: &world.certs,
            trcs: &st.trcs,
            verified: &mut st.verified,
        };
        validate_pcb(pcb, &world.topo, &st.trcs, &mut certs, *now)
    }

    fn receive_pcb(&mut self, to: AsId, from: AsId, ingress: u16, pcb: Pcb) {
        match self.validate_at(to, &pcb) {
            Verdict::Valid => {
                let kind = pcb.info.kind;
                let now = self.now;
                let st = self.ases.get_mut(&to).expect("known AS");
                let new = st.beacon.receive(pcb, ingress, now);
                if kind == PcbKind::Core && new && !st.flush_pending {
                    st.flush_pending = true;
                    self.schedule(now, Event::CoreFlush(to));
                }
            }
            Verdict::Invalid(r) => self.metrics.inc(format!("beacon.pcb.rejected.{}", r.as_str())),
            Verdict::StaleTrc { isd, version } => {
                let st = self.ases.get_mut(&to).expect("known AS");
                st.held.push((pcb, ingress, from));
                if st.fetching.insert((isd, version)) {
                    self.fetch_trc(to, from, isd, version);
                }
            }
        }
    }

    fn fetch_trc(&mut self, at: AsId, from: AsId, isd: IsdId, version: u32) {
        self.metrics.inc("trc.fetches");
        let hops = self.distance(at, from).unwrap_or(1);
        let rtt = self.latency_hops(hops) + self.latency_hops(hops);
        self.schedule(self.now + rtt, Event::TrcFetched { at, from, isd, version });
    }

    fn note_trc(&mut self, a: AsId) {
        let now = self.now;
        let st = &self.ases[&a];
        for isd in st.trcs.isds().collect::<Vec<_>>() {
            for v in 1..=st.trcs.current_version(isd) {
                self.trc_installs.entry((isd, v)).or_default().entry(a).or_insert(now);
            }
        }
    }

    fn trc_fetched(&mut self, at: AsId, from: AsId, isd: IsdId, version: u32) {
        let fetched: Vec<Trc> = {
            let src = &self.ases[&from].trcs;
            let have = self.ases[&at].trcs.current_version(isd);
            (have + 1..=version).filter_map(|v| src.get(isd, v).cloned()).collect()
        };
        let st = self.ases.get_mut(&at).expect("known AS");
        st.fetching.remove(&(isd, version));
        let mut failed = false;
        for t in fetched {
            if st.trcs.update(t).is_err() {
                failed = true;
                break;
            }
        }
        if failed {
            self.metrics.inc("trc.fetch_rejected");
        }
        self.note_trc(at);
        let held = std::mem::take(&mut self.ases.get_mut(&at).expect("known AS").held);
        for (pcb, ingress, sender) in held {
            let stale_again = pcb
                .hops
                .iter()
                .any(|h| h.as_id.isd == isd && h.trc_version > self.ases[&at].trcs.current_version(isd));
            if stale_again && failed {
                self.metrics.inc("beacon.pcb.rejected.stale-trc");
                continue;
            }
            self.receive_pcb(at, sender, ingress, pcb);
        }
    }

    // ---- path service ----------------------------------------------------

    fn register(&mut self, to: AsId, from: AsId, kind: SegmentKind, pcbs: Vec<Pcb>) {
        let mut stale: Vec<(Pcb, IsdId, u32)> = Vec::new();
        let out = {
            let Engine { world, ases, ps, now, .. } = self;
            let st = ases.get_mut(&to).expect("known AS");
            let mut certs = DirectoryCerts {
                certs: &world.certs,
                trcs: &st.trcs,
                verified: &mut st.verified,
            };
            let topo = &world.topo;
            let trcs = &st.trcs;
            let t = *now;
            ps.server_mut(to).register(kind, pcbs, topo, t, &mut |p| {
                let v = validate_pcb(p, topo, trcs, &mut certs, t);
                if let Verdict::StaleTrc { isd, version } = v {
                    stale.push((p.clone(), isd, version));
                }
                v
            })
        };
        self.metrics.add("ps.register.accepted", out.accepted as u64);
        self.metrics.add("ps.register.changed", out.changed as u64);
        for r in &out.rejected {
            if *r != Rejection::StaleTrc {
                self.metrics.inc(format!("ps.register.rejected.{}", label(*r)));
            }
        }
        if !stale.is_empty() {
            // Fetch the missing TRC from the registrant, then retry.
            let mut retry = Vec::new();
            for (p, isd, version) in stale {
                if self.ases.get_mut(&to).expect("known AS").fetching.insert((isd, version)) {
                    self.fetch_trc(to, from, isd, version);
                }
                retry.push(p);
            }
            let hops = self.distance(to, from).unwrap_or(1);
            let at = self.now + self.latency_hops(hops) + self.latency_hops(hops);
            self.schedule(at, Event::Register { to, from, kind, pcbs: retry });
        }
    }

    fn lookup(&mut self, src: AsId, dst: AsId) -> Result<LookupOutcome, LookupError> {
        let Engine { world, ps, down, now, tunables, .. } = self;
        let topo = &world.topo;
        let dist = |a: AsId, b: AsId| topo.hop_distance(a, b, |l| !down.contains(&l));
        let env = NetEnv {
            topo,
            distance: &dist,
            link_latency: tunables.link_latency,
        };
        let r = ps.lookup(src, dst, *now, &env);
        self.metrics.inc("ps.lookup.requests");
        match &r {
            Ok(o) => {
                self.metrics.add("ps.lookup.messages", o.messages);
                self.metrics.add("ps.lookup.bytes", o.bytes);
                if o.cache_hit {
                    self.metrics.inc("ps.lookup.cache_hits");
                }
            }
            Err(e) => self.metrics.inc(format!("ps.lookup.errors.{}", e.as_str())),
        }
        r
    }

    /// Look up segments at the current time and combine them into paths.
    pub fn paths(&mut self, src: AsId, dst: AsId) -> Result<(Vec<EndToEndPath>, SimTime), LookupError> {
        let out = self.lookup(src, dst)?;
        let r = &out.reply;
        Ok((combine(&r.up, &r.core, &r.down, src, dst, &self.world.topo), out.latency))
    }

    fn drkey_exchange<'a>(
        world: &'a World,
        requester: AsId,
        now: SimTime,
    ) -> impl FnOnce(AsId) -> Result<DrKey, DrKeyError> + 'a {
        move |origin| {
            let (Some(req_s), Some(orig_s)) = (world.secrets.get(&requester), world.secrets.get(&origin)) else {
                return Err(DrKeyError::Unreachable(origin));
            };
            let req = DrKeyRequest::new(req_s, origin, now);
            let rsp = req.respond(orig_s, &world.certs[&requester].public)?;
            rsp.accept(&world.certs[&origin].public, now)
        }
    }

    fn verify_scmp(&mut self, at: AsId, msg: &ScmpMessage) -> bool {
        let Engine { world, ases, now, .. } = self;
        let st = ases.get_mut(&at).expect("known AS");
        let ok = scmp_verify(at, msg, &mut st.drkeys, *now, Engine::drkey_exchange(world, at, *now)).is_ok();
        self.metrics.inc(if ok { "scmp.verified" } else { "scmp.rejected" });
        ok
    }

    /// Send a revocation issued by `issuer` (or forged by `sender`) to the
    /// path and beacon servers of every reachable AS.
    fn broadcast_revocation(&mut self, sender: AsId, make: impl Fn(AsId) -> ScmpMessage, forged: bool) {
        let targets: Vec<AsId> = self.world.topo.ases.keys().copied().collect();
        for to in targets {
            let Some(d) = self.distance(sender, to) else {
                self.metrics.inc("scmp.unreachable");
                continue;
            };
            let msg = make(to);
            self.metrics.inc("scmp.sent");
            let at = self.now + if d == 0 { SimTime::ZERO } else { self.latency_hops(d) };
            self.schedule(at, Event::Revocation { to, msg, forged });
        }
    }

    fn revocation(&mut self, to: AsId, msg: ScmpMessage, forged: bool) {
        let ok = self.verify_scmp(to, &msg);
        let r = self.ps.server_mut(to).process_revocation(&msg, |_| {
            if ok {
                Ok(())
            } else {
                Err(crate::dataplane::ScmpReject::BadTag)
            }
        });
        match r {
            Ok(n) => {
                self.metrics.inc("ps.revocations.accepted");
                self.metrics.add("ps.revocations.purged", n as u64);
                if forged {
                    self.metrics.add("attack.forge_scmp.purged", n as u64);
                }
                if let Some((a, i)) = msg.subject {
                    let at = msg.timestamp;
                    let st = self.ases.get_mut(&to).expect("known AS");
                    let n = st.beacon.revoke(a, i.value(), at);
                    self.metrics.add("beacon.revocations.purged", n as u64);
                }
            }
            Err(_) => {
                self.metrics.inc("ps.revocations.rejected");
                if forged {
                    self.metrics.inc("attack.forge_scmp.rejected");
                }
            }
        }
    }

    // ---- script ----------------------------------------------------------

    fn script(&mut self, i: usize) {
        let d = self.scenario.script[i].directive.clone();
        match d {
            Directive::FailLink { link, .. } => self.fail_link(link),
            Directive::RestoreLink { link } => {
                if self.down.remove(&link) {
                    self.metrics.inc("links.restored");
                }
            }
            Directive::Attack(a) => self.start_attack(a),
            Directive::TrcUpdate { isd, fixture } => self.trc_update(isd, &fixture),
        }
    }

    fn fail_link(&mut self, id: LinkId) {
        if !self.down.insert(id) {
            return;
        }
        self.metrics.inc("links.failed");
        let link = self.world.topo.link(id).expect("validated link").clone();
        let now = self.now;
        for (a, i) in [(link.a, link.a_if), (link.b, link.b_if)] {
            let n = self.ases.get_mut(&a).expect("known AS").beacon.revoke(a, i.value(), now);
            self.metrics.add("beacon.revocations.purged", n as u64);
            let secrets = self.world.secrets[&a].clone();
            self.broadcast_revocation(a, |to| scmp_auth(&secrets, ScmpMessage::revoke(a, i, now), to), false);
        }
    }

    fn trc_update(&mut self, isd: IsdId, fixture: &TrcFixture) {
        let cores = self.world.topo.core_ases(isd);
        let Some(first) = cores.first() else { return };
        let prev = self.ases[first].trcs.current(isd).expect("bootstrapped").clone();
        let roots = prev.trust_roots.len() as u8;
        let signers: Vec<u8> = match fixture {
            TrcFixture::Quorum => (0..roots).collect(),
            TrcFixture::Insufficient => (0..(prev.quorum_trc as u8).saturating_sub(1)).collect(),
            TrcFixture::Signers(s) => s.clone(),
        };
        let next = self.world.next_trc(&prev, &signers);
        let v = next.version;
        self.trc_issued.insert((isd, v), self.now);
        self.metrics.set(format!("trc.{isd}.v{v}.issued_us"), self.now.as_micros());
        for c in cores {
            match self.ases.get_mut(&c).expect("known AS").trcs.update(next.clone()) {
                Ok(()) => self.note_trc(c),
                Err(_) => self.metrics.inc(format!("trc.{isd}.v{v}.rejected")),
            }
        }
    }

    // ---- adversaries -----------------------------------------------------

    fn start_attack(&mut self, a: Attack) {
        self.metrics.inc(format!("attack.{}.started", a.name()));
        match a {
            Attack::ForgePcb { .. } | Attack::Hijack { .. } => self.adversaries.push(a),
            Attack::ForgeOf { adversary, dst, count } => self.forge_of(adversary, dst, count),
            Attack::ForgeScmp {
                adversary,
                victim,
                interface,
            } => {
                let now = self.now;
                let own = self.world.secrets[&adversary].clone();
                self.broadcast_revocation(
                    adversary,
                    |to| {
                        let mut m = ScmpMessage::revoke(victim, interface, now);
                        // The adversary can only key the tag with its own secret.
                        m.tag = m.tag_with(&derive_drkey(&own, to));
                        m
                    },
                    true,
                );
            }
        }
    }

    fn neighbors_for(&self, a: AsId, kind: PcbKind) -> Vec<(u16, AsId, u16, LinkId)> {
        let topo = &self.world.topo;
        let ns = match kind {
            PcbKind::Intra => topo.customers(a),
            PcbKind::Core => topo.neighbors(a, LinkType::Core),
        };
        ns.unwrap_or_default()
            .into_iter()
            .filter(|n| !self.down.contains(&n.link))
            .map(|n| (n.local_if.value(), n.remote, n.remote_if.value(), n.link))
            .collect()
    }

    fn inject(&mut self, from: AsId, (_, to, rif, link): (u16, AsId, u16, LinkId), pcb: Pcb) {
        let at = self.now + self.tunables.link_latency;
        self.schedule(at, Event::Pcb { to, from, ingress: rif, link, pcb });
    }

    fn adversary_round(&mut self, attack: &Attack, kind: PcbKind) {
        let adv = attack.adversary();
        let secrets = self.world.secrets[&adv].clone();
        let signer = Signer {
            secrets: &secrets,
            trc_version: self.ases[&adv].trcs.current_version(adv.isd),
            cert_version: 1,
            expiry_units: self.policy.expiry_units,
        };
        let links = self.neighbors_for(adv, kind);
        let pool: Vec<(Pcb, u16)> = self.ases[&adv]
            .beacon
            .pool()
            .filter(|e| e.pcb.info.kind == kind)
            .map(|e| (e.pcb.clone(), e.ingress))
            .collect();
        let mut forged: Vec<(usize, Pcb)> = Vec::new();
        let mut registrations: Vec<(AsId, Pcb)> = Vec::new();
        match attack {
            Attack::ForgePcb { .. } => {
                // Impersonate a core AS that hands the beacon to us over a
                // link that does not exist.
                let core = self.world.topo.core_ases(adv.isd).into_iter().find(|c| *c != adv);
                let isd = adv.isd;
                for (li, l) in links.iter().enumerate() {
                    if let Some(c) = core {
                        let mut fake = secrets.clone();
                        fake.owner = c;
                        let fsign = Signer { secrets: &fake, ..signer };
                        if let Ok(p) = Pcb::originate(kind, isd, self.now, &fsign, BOGUS_IF, &[]) {
                            if let Ok(p2) = p.extend(&signer, BOGUS_IF, l.0, &[]) {
                                forged.push((li, p2));
                            }
                            if li == 0 {
                                if let Ok(t) = p.extend(&signer, BOGUS_IF, 0, &[]) {
                                    registrations.push((c, t));
                                }
                            }
                        }
                    }
                    // A genuine beacon extended over an interface we do not have.
                    if let Some((p, ingress)) = pool.first() {
                        if let Ok(p2) = p.extend(&signer, *ingress, BOGUS_IF, &[]) {
                            forged.push((li, p2));
                        }
                    }
                }
            }
            Attack::Hijack { .. } => {
                for (p, ingress) in pool.iter().filter(|(p, _)| p.hops.len() >= 2).take(3) {
                    let mut short = p.clone();
                    short.hops.truncate(1);
                    for (li, l) in links.iter().enumerate() {
                        if l.1 == p.info.origin {
                            continue;
                        }
                        if let Ok(p2) = short.extend(&signer, *ingress, l.0, &[]) {
                            forged.push((li, p2));
                        }
                    }
                    if let Ok(t) = short.extend(&signer, *ingress, 0, &[]) {
                        registrations.push((p.info.origin, t.clone()));
                        registrations.push((adv, t));
                    }
                }
            }
            _ => {}
        }
        let name = attack.name();
        for (li, p) in forged {
            self.metrics.inc(format!("attack.{name}.pcbs"));
            self.inject(adv, links[li], p);
        }
        for (to, p) in registrations {
            self.metrics.inc(format!("attack.{name}.registrations"));
            let k = if kind == PcbKind::Core {
                SegmentKind::Core
            } else if to == adv {
                SegmentKind::Up
            } else {
                SegmentKind::Down
            };
            let at = self.now + self.tunables.link_latency;
            self.schedule(at, Event::Register { to, from: adv, kind: k, pcbs: vec![p] });
        }
    }

    /// Packets with random MACs along a real path (or a made-up one).
    fn forge_of(&mut self, adv: AsId, dst: AsId, count: u64) {
        let template = match self.paths(adv, dst) {
            Ok((ps, _)) if !ps.is_empty() && !ps[0].forwarding.segments.is_empty() => ps[0].forwarding.clone(),
            _ => {
                let Some(n) = self.world.topo.node(adv).ok().and_then(|n| n.interfaces.keys().next().copied()) else {
                    return;
                };
                let mut fp = crate::dataplane::ForwardingPath::default();
                fp.segments.push(crate::dataplane::SegmentFields {
                    info: crate::dataplane::InfoField {
                        timestamp: self.now.whole_secs_u32(),
                        isd: adv.isd.value(),
                        cons_dir: true,
                        shortcut: false,
                        peering: false,
                        kind: SegmentKind::Down,
                    },
                    ofs: vec![
                        crate::dataplane::OpaqueField { flags: 0, expiry: 169, ingress: 0, egress: n.value(), mac: 0 },
                        crate::dataplane::OpaqueField { flags: 0, expiry: 169, ingress: 1, egress: 0, mac: 0 },
                    ],
                });
                fp
            }
        };
        let rng_name = format!("adversary/{adv}/forge-of");
        let now = self.now;
        let mut passed = 0u64;
        let mut reasons: BTreeMap<String, u64> = BTreeMap::new();
        for _ in 0..count {
            let mut fp = template.clone();
            for s in &mut fp.segments {
                for of in &mut s.ofs {
                    of.mac = self.rng(&rng_name).gen::<u32>() & 0x00FF_FFFF;
                }
            }
            let Ok(mut pkt) = Packet::new(fp, HostAddr::V4([192, 0, 2, 66]), HostAddr::None, Vec::new()) else {
                continue;
            };
            let topo = &self.world.topo;
            let down = &self.down;
            let up = |i: u16| Engine::if_up(topo, down, adv, i);
            let ctx = RouterContext {
                key: &self.world.secrets[&adv].mac_secret,
                link_up: &up,
            };
            match forward(&ctx, &mut pkt, Arrival::Local, now) {
                Action::Drop(r) => *reasons.entry(r.as_str().to_string()).or_default() += 1,
                _ => passed += 1,
            }
        }
        self.metrics.add("attack.forge_of.sent", count);
        self.metrics.add("attack.forge_of.passed_first_as", passed);
        for (r, n) in reasons {
            self.metrics.add(format!("dp.drop.{r}"), n);
        }
    }

    // ---- flows and packets -----------------------------------------------

    fn flow_lookup(&mut self, f: usize) {
        let (src, dst) = (self.flows[f].spec.src, self.flows[f].spec.dst);
        self.flows[f].lookup_pending = false;
        let now = self.now;
        let res = self.paths(src, dst);
        let first = !self.flows[f].started;
        self.flows[f].started = true;
        match res {
            Ok((paths, latency)) => {
                let topo = &self.world.topo;
                let fl = &mut self.flows[f];
                fl.candidates = paths;
                fl.fill(topo, now);
                fl.ready_at = now + latency;
                if fl.active.is_empty() {
                    fl.isolated += 1;
                }
            }
            Err(_) => self.flows[f].isolated += 1,
        }
        if self.flows[f].active.is_empty() {
            self.request_lookup(f, now + self.tunables.interval_intra);
        }
        if first {
            let at = self.flows[f].ready_at.max(now);
            self.schedule(at, Event::FlowSend(f));
        }
    }

    fn request_lookup(&mut self, f: usize, at: SimTime) {
        if !self.flows[f].lookup_pending && at < self.flows[f].spec.stop {
            self.flows[f].lookup_pending = true;
            self.schedule(at, Event::FlowLookup(f));
        }
    }

    fn flow_send(&mut self, f: usize) {
        let now = self.now;
        if now >= self.flows[f].spec.stop {
            return;
        }
        let period = SimTime::from_micros(1_000_000 / self.flows[f].spec.rate as u64);
        self.schedule(now + period, Event::FlowSend(f));
        let fl = &mut self.flows[f];
        if now < fl.ready_at || fl.active.is_empty() {
            fl.unsent += 1;
            return;
        }
        let (seq, fp, id) = fl.next_packet();
        let (src, src_host, dst_host) = (fl.spec.src, fl.spec.src_host, fl.spec.dst_host);
        let Ok(pkt) = Packet::new(fp, src_host, dst_host, seq.to_be_bytes().to_vec()) else {
            fl.unsent += 1;
            return;
        };
        fl.sent += 1;
        fl.outstanding.insert(seq, id);
        self.metrics.inc("dp.sent");
        self.schedule(
            now,
            Event::Packet {
                at: src,
                arrival: Arrival::Local,
                pkt,
                tag: PacketTag::Data { flow: f, seq },
            },
        );
        let t = now + self.tunables.ack_timeout;
        self.schedule(t, Event::AckTimeout { flow: f, seq });
    }

    fn ack_timeout(&mut self, f: usize, seq: u64) {
        let now = self.now;
        let topo = &self.world.topo;
        let fl = &mut self.flows[f];
        if let Some(id) = fl.outstanding.remove(&seq) {
            if fl.strike(&id, now, topo) && fl.active.is_empty() {
                self.request_lookup(f, now);
            }
        }
    }

    fn packet(&mut self, at: AsId, arrival: Arrival, mut pkt: Packet, tag: PacketTag) {
        let now = self.now;
        let action = {
            let topo = &self.world.topo;
            let down = &self.down;
            let up = |i: u16| Engine::if_up(topo, down, at, i);
            let ctx = RouterContext {
                key: &self.world.secrets[&at].mac_secret,
                link_up: &up,
            };
            forward(&ctx, &mut pkt, arrival, now)
        };
        match action {
            Action::Forward(out) => {
                let link = InterfaceId::new(out).and_then(|i| self.world.topo.link_at(at, i)).cloned();
                let Some(link) = link else {
                    self.drop_packet(&tag, "structure");
                    return;
                };
                let (next, nif) = link.remote(at).expect("link touches router");
                self.metrics.inc("dp.forwarded");
                let t = now + self.tunables.link_latency;
                self.schedule(
                    t,
                    Event::Packet {
                        at: next,
                        arrival: Arrival::Interface(nif.value()),
                        pkt,
                        tag,
                    },
                );
            }
            Action::Deliver => self.deliver(at, pkt, tag),
            Action::Drop(r) => {
                self.metrics.inc(format!("dp.drop.{}", r.as_str()));
                self.drop_packet(&tag, r.as_str());
            }
            Action::LinkDown { egress, mut notice } => {
                self.metrics.inc("dp.drop.link-down");
                self.drop_packet(&tag, "link-down");
                let (flow, verifier) = match tag {
                    PacketTag::Data { flow, .. } => (flow, self.flows[flow].spec.src),
                    PacketTag::Ack { flow, .. } => (flow, self.flows[flow].spec.dst),
                    PacketTag::Notice { .. } => return,
                };
                let Some(ifid) = InterfaceId::new(egress) else { return };
                let msg = scmp_auth(&self.world.secrets[&at], ScmpMessage::revoke(at, ifid, now), verifier);
                notice.payload = msg.encode();
                self.metrics.inc("scmp.sent");
                self.schedule(
                    now,
                    Event::Packet {
                        at,
                        arrival: Arrival::Local,
                        pkt: notice,
                        tag: PacketTag::Notice { flow },
                    },
                );
            }
        }
    }

    fn drop_packet(&mut self, tag: &PacketTag, reason: &str) {
        if let PacketTag::Data { flow, .. } = tag {
            *self.flows[*flow].dropped.entry(reason.to_string()).or_default() += 1;
        }
    }

    fn deliver(&mut self, at: AsId, pkt: Packet, tag: PacketTag) {
        let now = self.now;
        match tag {
            PacketTag::Data { flow, seq } => {
                let fl = &mut self.flows[flow];
                if at != fl.spec.dst {
                    *fl.dropped.entry("misdelivered".into()).or_default() += 1;
                    return;
                }
                if pkt.dst_addr() == HostAddr::None && !self.scenario.default_hosts.contains_key(&at) {
                    *fl.dropped.entry("no-target".into()).or_default() += 1;
                    return;
                }
                fl.on_delivery(now);
                self.metrics.inc("dp.delivered");
                let ack = pkt.reply(seq.to_be_bytes().to_vec());
                self.schedule(
                    now,
                    Event::Packet {
                        at,
                        arrival: Arrival::Local,
                        pkt: ack,
                        tag: PacketTag::Ack { flow, seq },
                    },
                );
            }
            PacketTag::Ack { flow, seq } => {
                let fl = &mut self.flows[flow];
                if let Some(id) = fl.outstanding.remove(&seq) {
                    fl.acked += 1;
                    fl.reset_strikes(&id);
                }
            }
            PacketTag::Notice { flow } => {
                let Some(msg) = ScmpMessage::decode(&pkt.payload) else { return };
                if !self.verify_scmp(at, &msg) {
                    return;
                }
                let Some((a, i)) = msg.subject else { return };
                let topo = &self.world.topo;
                let avoid_until = now + self.tunables.interval_intra + self.tunables.interval_intra;
                let fl = &mut self.flows[flow];
                if at == fl.spec.src && fl.revoke(a, i.value(), now, avoid_until, topo) && fl.active.is_empty() {
                    self.request_lookup(flow, now);
                }
            }
        }
    }

    // ---- end of run --------------------------------------------------------

    fn in_flight(&self) -> BTreeMap<usize, u64> {
        let mut out = BTreeMap::new();
        for ev in self.queue.values() {
            if let Event::Packet {
                tag: PacketTag::Data { flow, .. },
                ..
            } = ev
            {
                *out.entry(*flow).or_default() += 1;
            }
        }
        out
    }

    /// Every stored segment that fails validation or does not follow real
    /// links. `(server, reason)` per finding.
    pub fn audit(&self) -> (usize, Vec<(AsId, String)>) {
        let mut store = self.world.bootstrap_store();
        for st in self.ases.values() {
            for isd in st.trcs.isds() {
                for v in 2..=st.trcs.current_version(isd) {
                    if let Some(t) = st.trcs.get(isd, v) {
                        let _ = store.update(t.clone());
                    }
                }
            }
        }
        let mut verified = BTreeSet::new();
        let mut certs = DirectoryCerts {
            certs: &self.world.certs,
            trcs: &store,
            verified: &mut verified,
        };
        let topo = &self.world.topo;
        let mut total = 0;
        let mut bad = Vec::new();
        for (server, seg) in self.ps.all_segments() {
            total += 1;
            let at = seg.pcb.info.created();
            match validate_pcb(&seg.pcb, topo, &store, &mut certs, at) {
                Verdict::Valid => {}
                v => {
                    bad.push((server, format!("{v:?}")));
                    continue;
                }
            }
            if !seg.contiguous_in(topo) {
                bad.push((server, "not contiguous".into()));
            }
        }
        (total, bad)
    }

    fn finish(&mut self) {
        let end = self.scenario.duration;
        let inflight = self.in_flight();
        for (i, fl) in self.flows.iter_mut().enumerate() {
            fl.inflight = inflight.get(&i).copied().unwrap_or(0);
            fl.close(end);
        }
        let mut m = std::mem::take(&mut self.metrics);
        for (i, fl) in self.flows.iter().enumerate() {
            fl.export(i, &mut m);
        }
        let (total, bad) = self.audit();
        m.add("audit.segments", total as u64);
        m.add("audit.forged", bad.len() as u64);
        let exchanges: u64 = self.ases.values().map(|s| s.drkeys.exchanges()).sum();
        m.add("drkey.exchanges", exchanges);
        for (&(isd, v), &issued) in &self.trc_issued {
            let members: Vec<AsId> = self.world.topo.ases.keys().copied().filter(|a| self.world.topo.is_member(*a, isd)).collect();
            let holders = self.trc_installs.get(&(isd, v));
            let held: Vec<SimTime> = members.iter().filter_map(|a| holders.and_then(|h| h.get(a)).copied()).collect();
            m.add(format!("trc.{isd}.v{v}.members"), members.len() as u64);
            m.add(format!("trc.{isd}.v{v}.holders"), held.len() as u64);
            if held.len() == members.len() {
                let last = held.iter().max().copied().unwrap_or(issued);
                m.set(format!("trc.{isd}.v{v}.propagation_us"), last.saturating_sub(issued).as_micros());
            }
        }
        let segs = self.ps.all_segments().count();
        m.add("ps.segments.stored", segs as u64);
        m.set("sim.duration_us", end.as_micros());
        m.set("sim.seed", self.scenario.seed);
        self.metrics = m.clone();
        self.finished = Some(m);
    }
}

/// Build an engine for `scenario`, run it to the end and return it.
pub fn run(scenario: &Scenario) -> (Metrics, Engine) {
    let mut e = Engine::new(scenario);
    let m = e.run();
    (m, e)
}

impl AsState {
    pub fn held_len(&self) -> usize {
        self.held.len()
    }
}
