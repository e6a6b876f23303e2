//! End-to-end runs of the fixture scenarios.

mod common;

use std::collections::BTreeSet;
use std::path::PathBuf;

use common::up_oracle::up_segments;
use scion_sim::beaconing::Pcb;
use scion_sim::sim::flow::path_links;
use scion_sim::sim::{Engine, Scenario};
use scion_sim::time::SimTime;
use scion_sim::topology::{AsId, InterfaceId, LinkId, Topology};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn load(name: &str) -> Scenario {
    Scenario::load(&fixture(name)).unwrap()
}

fn as_id(s: &str) -> AsId {
    s.parse().unwrap()
}

/// True when consecutive hops are joined by a real link on the recorded
/// interfaces and the beacon starts at a core AS.
fn follows_links(pcb: &Pcb, topo: &Topology) -> bool {
    let hops = &pcb.hops;
    if hops.is_empty() || hops[0].ingress != 0 || !topo.is_core(hops[0].as_id) {
        return false;
    }
    hops.windows(2).all(|w| {
        let Some(link) = InterfaceId::new(w[0].egress).and_then(|i| topo.link_at(w[0].as_id, i)) else {
            return false;
        };
        link.remote(w[0].as_id)
            .is_some_and(|(r, rif)| r == w[1].as_id && rif.value() == w[1].ingress)
    })
}

#[test]
fn emission_per_link_is_min_of_pool_and_k() {
    for (file, pool) in [("fanin1.scn", 1), ("fanin8.scn", 8)] {
        let s = load(file);
        let mut e = Engine::new(&s);
        e.run();
        let mid = as_id("1-10");
        // Every distinct chain to a core is one pool entry.
        assert_eq!(up_segments(e.topo(), mid).len(), pool);
        let k = s.tunables.k_intra.unwrap();
        let children: BTreeSet<LinkId> = e.topo().customers(mid).unwrap().iter().map(|n| n.link).collect();
        let warm = e.phase + s.tunables.interval_intra + s.tunables.interval_intra;
        let rounds: Vec<_> = e
            .link_rounds
            .iter()
            .filter(|r| r.as_id == mid && children.contains(&r.link) && r.time >= warm)
            .collect();
        // One round per child link per tick over the rest of the run.
        let ticks = (s.duration.as_micros() - warm.as_micros()).div_ceil(s.tunables.interval_intra.as_micros());
        assert_eq!(rounds.len() as u64, ticks * children.len() as u64, "{file}");
        for r in &rounds {
            assert_eq!(r.emitted, pool.min(k), "{file} at {:?}", r.time);
        }
        // Every provider-to-customer round anywhere honours the bound.
        for r in &e.link_rounds {
            assert_eq!(r.emitted, r.eligible.min(k), "{file}: {r:?}");
        }
        assert_eq!(e.metrics.counter("beacon.rate.violations"), 0);
        // Round records agree with the beacons actually put on the wire.
        for l in &children {
            let recorded: usize = e.link_rounds.iter().filter(|r| r.link == *l).map(|r| r.emitted).sum();
            assert_eq!(recorded as u64, e.metrics.counter(&format!("beacon.link.{l}.sent")));
        }
    }
}

#[test]
fn failover_masks_a_link_failure() {
    let s = load("failover.scn");
    let mut e = Engine::new(&s);
    e.run_until(SimTime::from_secs(60));
    let f = &e.flows[0];
    assert_eq!(f.active.len(), 2);
    let a = path_links(&f.active[0].path, e.topo());
    let b = path_links(&f.active[1].path, e.topo());
    assert!(a.is_disjoint(&b), "{a:?} {b:?}");
    let m = e.run();
    let expected = 60 * 10;
    let delivered = m.counter("flow.0.delivered");
    assert!(delivered * 100 >= expected * 99, "delivered {delivered} of {expected}");
    assert!(m.counter("flow.0.max_gap_us") <= 1_000_000, "gap {}", m.counter("flow.0.max_gap_us"));
    assert!(m.counter("flow.0.switchovers") >= 1);
    assert_eq!(e.flows[0].unaccounted(), 0);
}

#[test]
fn revocation_purges_within_an_interval_and_forgeries_purge_nothing() {
    let s = load("revocation.scn");
    let mut e = Engine::new(&s);
    let victim = (as_id("1-12"), 2u16);
    let uses_victim = |e: &Engine| e.ps.all_segments().filter(|(_, seg)| seg.uses_interface(victim.0, victim.1)).count();

    e.run_until(SimTime::from_secs(80));
    let before = uses_victim(&e);
    assert!(before > 0);
    e.run_until(SimTime::from_secs(81));
    assert_eq!(uses_victim(&e), before, "forged revocation purged segments");
    assert!(e.metrics.counter("attack.forge_scmp.rejected") > 0);
    assert_eq!(e.metrics.counter("attack.forge_scmp.purged"), 0);

    let link = e.topo().link(LinkId(5)).unwrap().clone();
    let ends = [(link.a, link.a_if.value()), (link.b, link.b_if.value())];
    let deadline = SimTime::from_secs(100) + s.tunables.interval_intra + s.tunables.link_latency + s.tunables.link_latency;
    e.run_until(deadline);
    let stale = |e: &Engine| {
        e.ps.all_segments()
            .filter(|(_, seg)| ends.iter().any(|&(a, i)| seg.uses_interface(a, i)))
            .count()
    };
    assert_eq!(stale(&e), 0);
    let ases: Vec<AsId> = e.topo().ases.keys().copied().collect();
    for &src in &ases {
        for &dst in &ases {
            if src == dst {
                continue;
            }
            if let Ok((paths, _)) = e.paths(src, dst) {
                for p in paths {
                    assert!(!p.hops.iter().any(|h| ends.iter().any(|&(a, i)| h.as_id == a && (h.ingress == i || h.egress == i))));
                }
            }
        }
    }
    e.run();
    assert_eq!(stale(&e), 0);
}

#[test]
fn trc_update_reaches_every_member_in_time_or_nobody() {
    let s = load("trc-quorum.scn");
    let issued = SimTime::from_secs(50);
    let bound = issued + SimTime::from_secs(45) + SimTime::from_micros(3 * s.tunables.link_latency.as_micros());
    let mut e = Engine::new(&s);
    e.run_until(bound + SimTime::from_micros(1));
    let isd = scion_sim::topology::IsdId::new(1).unwrap();
    let members: Vec<AsId> = e.topo().ases.keys().copied().filter(|a| e.topo().is_member(*a, isd)).collect();
    assert_eq!(members.len(), 7);
    for a in &members {
        assert_eq!(e.ases[a].trcs.current_version(isd), 2, "{a}");
    }
    let m = e.run();
    assert_eq!(m.counter("trc.1.v2.holders"), 7);
    let prop: u64 = m.value("trc.1.v2.propagation_us").unwrap().parse().unwrap();
    assert!(issued.as_micros() + prop <= bound.as_micros());

    let s = load("trc-insufficient.scn");
    let mut e = Engine::new(&s);
    let m = e.run();
    assert_eq!(m.counter("trc.1.v2.holders"), 0);
    for st in e.ases.values() {
        assert_eq!(st.trcs.current_version(isd), 1);
    }
}

#[test]
fn no_fetches_when_every_store_is_current() {
    let s = load("fanin1.scn");
    let m = Engine::new(&s).run();
    assert_eq!(m.counter("trc.fetches"), 0);
}

#[test]
fn adversaries_register_nothing() {
    let s = load("hijack.scn");
    let mut e = Engine::new(&s);
    let m = e.run();
    assert!(m.counter("attack.forge_pcb.pcbs") > 0);
    assert!(m.counter("attack.hijack.registrations") > 0);
    assert_eq!(m.counter("audit.forged"), 0);
    let (total, bad) = e.audit();
    assert!(total > 0 && bad.is_empty());
    for (server, seg) in e.ps.all_segments() {
        assert!(follows_links(&seg.pcb, e.topo()), "{server} stores {:?}", seg.pcb.identity());
    }
}

#[test]
fn forged_opaque_fields_never_pass_the_first_router() {
    let m = Engine::new(&load("forge-of.scn")).run();
    assert_eq!(m.counter("attack.forge_of.sent"), 100_000);
    assert_eq!(m.counter("attack.forge_of.passed_first_as"), 0);
}

#[test]
fn isolation_and_flapping_keep_packets_accounted() {
    // 1-13 hangs off 1-12, whose only provider link is link 5.
    let text = "topology fig.topo\nseed 2\nduration 200\n\
                flow 1-13/10.0.0.1 1-16/10.0.0.2 rate 10 start 40\n\
                at 90 fail-link 5 restore 95\nat 100 fail-link 5 restore 105\nat 110 fail-link 5\n";
    let s = Scenario::parse(text, |p| Ok((std::fs::read_to_string(fixture(p)).unwrap(), fixture(p)))).unwrap();
    let mut e = Engine::new(&s);
    let m = e.run();
    assert!(m.counter("flow.0.isolated") > 0);
    assert!(m.counter("flow.0.delivered") > 0);
    assert_eq!(e.flows[0].unaccounted(), 0);
    assert_eq!(m.counter("audit.forged"), 0);
    // After the final failure nothing reaches 1-13 any more.
    assert!(e.paths(as_id("1-13"), as_id("1-16")).map_or(true, |(p, _)| p.is_empty()));
}

#[test]
fn every_fixture_scenario_is_deterministic() {
    for f in [
        "fig.scn",
        "failover.scn",
        "fanin1.scn",
        "fanin8.scn",
        "trc-quorum.scn",
        "trc-insufficient.scn",
        "revocation.scn",
        "hijack.scn",
        "forge-of.scn",
    ] {
        let s = load(f);
        let a = Engine::new(&s).run();
        let b = Engine::new(&s).run();
        assert!(!a.is_empty());
        assert_eq!(a.digest(), b.digest(), "{f}");
    }
}
