//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p scion-sim-cli --test acceptance`.

#[path = "../../core/tests/common/up_oracle.rs"]
mod up_oracle;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use scion_sim::dataplane::{verify_of, OpaqueField};
use scion_sim::sim::random::random_topology;
use scion_sim::sim::{Engine, Scenario};
use scion_sim::time::SimTime;
use scion_sim::topology::{AsId, IsdId, LinkId};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn load(name: &str) -> Scenario {
    Scenario::load(&fixture(name)).unwrap()
}

fn as_id(s: &str) -> AsId {
    s.parse().unwrap()
}

fn cli(args: &[&str]) -> (String, Duration) {
    let started = Instant::now();
    let o = Command::new(env!("CARGO_BIN_EXE_scion-sim")).args(args).output().unwrap();
    let took = started.elapsed();
    assert!(o.status.success(), "scion-sim {args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    (String::from_utf8(o.stdout).unwrap(), took)
}

fn four_cases() -> Check {
    let topo = fixture("fig.topo");
    let topo = topo.to_str().unwrap();
    // (name, from, to, expected top tag)
    let cases = [
        ("B->D", "1-13", "1-16", "IMMEDIATE"),
        ("B->C", "1-13", "1-14", "AS_SHORTCUT"),
        ("A->B", "1-11", "1-13", "PEERING_SHORTCUT"),
        ("A->D", "1-11", "1-16", "CORE_COMBINED"),
        ("A->I", "1-11", "4-10", "CORE_COMBINED"),
    ];
    let mut slowest = Duration::ZERO;
    for (name, from, to, want) in cases {
        let (out, took) = cli(&["paths", "--topo", topo, "--from", from, "--to", to]);
        slowest = slowest.max(took);
        ensure!(took < Duration::from_secs(1), "{name} took {took:?}");
        let tags: Vec<&str> = out.lines().filter_map(|l| l.split(' ').nth(1)).collect();
        ensure!(tags.first() == Some(&want), "{name}: got {tags:?}, want {want} first");
        if name == "B->D" {
            ensure!(tags.len() == 1, "B->D should list one path, got {tags:?}");
        }
        if name == "A->B" {
            ensure!(tags[1..].contains(&"CORE_COMBINED"), "A->B lacks the core path: {tags:?}");
        }
        if name == "A->I" {
            ensure!(out.lines().next().unwrap().contains(" 4-1 4-10 "), "A->I does not cross into ISD 4: {out}");
        }
    }
    Ok(format!("all five pairs tagged as expected, slowest query {slowest:.0?}"))
}

fn beacon_rate() -> Check {
    let mut detail = Vec::new();
    for (file, fan_in) in [("fanin1.scn", 1usize), ("fanin8.scn", 8)] {
        let s = load(file);
        let mut e = Engine::new(&s);
        e.run();
        let k = s.tunables.k_intra.unwrap();
        let mid = as_id("1-10");
        let pool = up_oracle::up_segments(e.topo(), mid).len();
        ensure!(pool == fan_in, "{file}: {pool} chains above 1-10");
        let children: BTreeSet<LinkId> = e.topo().customers(mid).unwrap().iter().map(|n| n.link).collect();
        let warm = e.phase + s.tunables.interval_intra + s.tunables.interval_intra;
        let mut rounds = 0;
        let mut violations = 0;
        for r in e.link_rounds.iter().filter(|r| r.time >= warm) {
            rounds += 1;
            if r.emitted != r.eligible.min(k) {
                violations += 1;
            }
            if r.as_id == mid && children.contains(&r.link) && r.emitted != pool.min(k) {
                violations += 1;
            }
        }
        ensure!(violations == 0, "{file}: {violations} violations");
        let per_child = e
            .link_rounds
            .iter()
            .filter(|r| r.as_id == mid && children.contains(&r.link) && r.time >= warm)
            .map(|r| r.emitted)
            .collect::<BTreeSet<_>>();
        detail.push(format!("fan-in {fan_in}: {rounds} rounds, per-link {per_child:?}"));
    }
    Ok(detail.join("; "))
}

fn completeness() -> Check {
    let started = Instant::now();
    let mut segments = 0;
    for seed in 0..100 {
        let topo = random_topology(seed, 12);
        let mut s = Scenario::new(topo.clone(), seed, SimTime::from_secs(300));
        s.tunables.k_intra = None;
        s.tunables.k_inter = None;
        s.tunables.ps_k = None;
        s.tunables.ps_capacity = None;
        let mut e = Engine::new(&s);
        e.run_until(s.duration);
        for &a in topo.ases.keys() {
            let got: BTreeSet<_> = e.ps.server(a).up.iter().map(|(_, seg)| seg.pcb.identity()).collect();
            let want = up_oracle::up_segments(&topo, a);
            ensure!(got == want, "seed {seed}, AS {a}: {} stored, {} expected", got.len(), want.len());
            segments += want.len();
        }
    }
    let took = started.elapsed();
    ensure!(took < Duration::from_secs(60), "took {took:?}");
    Ok(format!("100 topologies, {segments} up segments matched in {took:.1?}"))
}

fn tamper() -> Check {
    // A real hop field from a converged run, checked by its own router.
    let s = load("fig.scn");
    let mut e = Engine::new(&s);
    e.run_until(SimTime::from_secs(100));
    let (paths, _) = e.paths(as_id("1-13"), as_id("1-16")).unwrap();
    let seg = &paths[0].forwarding.segments[0];
    let idx = seg.first_usable().unwrap();
    let owner = paths[0].hops[0].as_id;
    let key = &e.world.secrets[&owner].mac_secret;
    let of = seg.ofs[idx];
    let prior = seg.prior_of(idx);
    // The source's own field is checked on local arrival: no interface check.
    let now = e.now();
    ensure!(verify_of(key, &of, prior, now, seg.info.timestamp, None).is_ok(), "untouched field rejected");
    let bytes = of.to_bytes();
    let mut rejected = 0;
    for bit in 0..64 {
        let mut b = bytes;
        b[bit / 8] ^= 0x80 >> (bit % 8);
        if verify_of(key, &OpaqueField::from_bytes(b), prior, now, seg.info.timestamp, None).is_err() {
            rejected += 1;
        }
    }
    ensure!(rejected == 64, "{rejected}/64 flips rejected");
    let m = Engine::new(&load("forge-of.scn")).run();
    let sent = m.counter("attack.forge_of.sent");
    let passed = m.counter("attack.forge_of.passed_first_as");
    ensure!(sent == 100_000, "{sent} forged packets sent");
    ensure!(passed == 0, "{passed} forged packets passed");
    Ok(format!("64/64 flips rejected; 0 of {sent} random-MAC packets passed the first AS"))
}

fn header_overhead() -> Check {
    let topo = fixture("fig.topo");
    let (out, _) = cli(&["dump-header", "--topo", topo.to_str().unwrap(), "--from", "1-16", "--to", "1-15"]);
    let lines: Vec<&str> = out.lines().collect();
    let header = hex::decode(lines[1]).map_err(|e| e.to_string())?;
    // Common header (8) + two info fields + four hop fields, 8 bytes each.
    let segments = lines.iter().filter(|l| l.starts_with("segment ")).count();
    let fields = lines.iter().filter(|l| l.starts_with("  field ")).count();
    ensure!(segments == 2 && fields == 4, "{segments} segments, {fields} fields");
    let region = header.len() - 8;
    ensure!(region == 8 * segments + 8 * fields, "region {region} does not match the field count");
    ensure!(region == 48, "path region is {region} bytes");
    ensure!(out.contains("round-trip: identical"), "round trip differs");
    Ok(format!("{} -> {region}-byte path region", lines[0]))
}

fn failover() -> Check {
    let s = load("failover.scn");
    let mut e = Engine::new(&s);
    e.run_until(SimTime::from_secs(60));
    let f = &e.flows[0];
    ensure!(f.active.len() == 2, "{} active paths", f.active.len());
    let a = scion_sim::sim::flow::path_links(&f.active[0].path, e.topo());
    let b = scion_sim::sim::flow::path_links(&f.active[1].path, e.topo());
    ensure!(a.is_disjoint(&b), "paths share links {:?}", a.intersection(&b).collect::<Vec<_>>());
    let m = e.run();
    let expected = (s.flows[0].stop.as_micros() - s.flows[0].start.as_micros()) / 1_000_000 * s.flows[0].rate as u64;
    let delivered = m.counter("flow.0.delivered");
    let gap = m.counter("flow.0.max_gap_us");
    ensure!(delivered * 100 >= expected * 99, "delivered {delivered}/{expected}");
    ensure!(gap <= 1_000_000, "gap {gap} us");
    Ok(format!(
        "{delivered}/{expected} delivered ({:.2}%), max gap {:.3} s",
        100.0 * delivered as f64 / expected as f64,
        gap as f64 / 1e6
    ))
}

fn revocation() -> Check {
    let s = load("revocation.scn");
    let mut e = Engine::new(&s);
    let victim = (as_id("1-12"), 2u16);
    let using = |e: &Engine, ends: &[(AsId, u16)]| {
        e.ps.all_segments()
            .filter(|(_, seg)| ends.iter().any(|&(a, i)| seg.uses_interface(a, i)))
            .count()
    };
    e.run_until(SimTime::from_secs(80));
    let before = using(&e, &[victim]);
    e.run_until(SimTime::from_secs(81));
    let after = using(&e, &[victim]);
    ensure!(before > 0 && before == after, "forged revocation changed {before} -> {after}");
    ensure!(e.metrics.counter("attack.forge_scmp.purged") == 0, "forged revocation purged segments");
    let link = e.topo().link(LinkId(5)).unwrap().clone();
    let ends = [(link.a, link.a_if.value()), (link.b, link.b_if.value())];
    let pre = using(&e, &ends);
    let deadline = SimTime::from_secs(100) + s.tunables.interval_intra + s.tunables.link_latency + s.tunables.link_latency;
    e.run_until(deadline);
    let left = using(&e, &ends);
    ensure!(left == 0, "{left} segments still use the revoked link");
    let ases: Vec<AsId> = e.topo().ases.keys().copied().collect();
    for &src in &ases {
        for &dst in &ases {
            if src == dst {
                continue;
            }
            if let Ok((paths, _)) = e.paths(src, dst) {
                let bad = paths.iter().any(|p| {
                    p.hops.iter().any(|h| ends.iter().any(|&(a, i)| h.as_id == a && (h.ingress == i || h.egress == i)))
                });
                ensure!(!bad, "{src} -> {dst} still offered over the revoked link");
            }
        }
    }
    Ok(format!("{pre} segments purged by the deadline; forged revocation purged 0 of {before}"))
}

fn trc_propagation() -> Check {
    let isd = IsdId::new(1).unwrap();
    let s = load("trc-quorum.scn");
    let issued = SimTime::from_secs(50);
    let bound = issued + SimTime::from_secs(45) + SimTime::from_micros(3 * s.tunables.link_latency.as_micros());
    let mut e = Engine::new(&s);
    e.run_until(bound + SimTime::from_micros(1));
    let members: Vec<AsId> = e.topo().ases.keys().copied().filter(|a| e.topo().is_member(*a, isd)).collect();
    let holding = members.iter().filter(|a| e.ases[a].trcs.current_version(isd) == 2).count();
    ensure!(holding == members.len(), "{holding}/{} members hold v2 at the bound", members.len());
    let m = e.run();
    let prop: f64 = m.value("trc.1.v2.propagation_us").unwrap().parse::<f64>().unwrap() / 1e6;

    let mut e = Engine::new(&load("trc-insufficient.scn"));
    e.run();
    let leaked = e.ases.values().filter(|st| st.trcs.current_version(isd) != 1).count();
    ensure!(leaked == 0, "insufficient update reached {leaked} ASes");
    Ok(format!("quorum update at {holding}/{} members after {prop:.2} s; insufficient update at 0", members.len()))
}

fn hijack() -> Check {
    let s = load("hijack.scn");
    let mut e = Engine::new(&s);
    let m = e.run();
    let forged = m.counter("attack.forge_pcb.pcbs") + m.counter("attack.forge_pcb.registrations");
    let hijacked = m.counter("attack.hijack.pcbs") + m.counter("attack.hijack.registrations");
    ensure!(forged > 0 && hijacked > 0, "adversaries were idle");
    let (total, bad) = e.audit();
    ensure!(bad.is_empty(), "{} bad segments, first at {}: {}", bad.len(), bad[0].0, bad[0].1);
    // Every stored segment must also follow real links from a core.
    let topo = e.topo();
    for (server, seg) in e.ps.all_segments() {
        let hops = &seg.pcb.hops;
        ensure!(topo.is_core(hops[0].as_id) && hops[0].ingress == 0, "{server} stores a segment not starting at a core");
        for w in hops.windows(2) {
            let ok = scion_sim::topology::InterfaceId::new(w[0].egress)
                .and_then(|i| topo.link_at(w[0].as_id, i))
                .and_then(|l| l.remote(w[0].as_id))
                .is_some_and(|(r, rif)| r == w[1].as_id && rif.value() == w[1].ingress);
            ensure!(ok, "{server} stores a segment with a fake adjacency");
        }
    }
    Ok(format!("{forged} forged and {hijacked} hijacked messages, {total} stored segments audited clean"))
}

fn determinism() -> Check {
    let files = [
        "fig.scn",
        "failover.scn",
        "fanin1.scn",
        "fanin8.scn",
        "trc-quorum.scn",
        "trc-insufficient.scn",
        "revocation.scn",
        "hijack.scn",
        "forge-of.scn",
    ];
    for f in files {
        let s = load(f);
        let a = Engine::new(&s).run().digest();
        let b = Engine::new(&s).run().digest();
        ensure!(a == b, "{f}: {a} != {b}");
    }
    let path = fixture("failover.scn");
    let a = cli(&["run", "--scenario", path.to_str().unwrap()]).0;
    let b = cli(&["run", "--scenario", path.to_str().unwrap()]).0;
    ensure!(a.lines().last() == b.lines().last(), "CLI digests differ");
    Ok(format!("{} scenarios and the CLI reproduce their digests", files.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("four-case reproduction", four_cases),
        ("beacon rate invariant", beacon_rate),
        ("path-discovery completeness", completeness),
        ("hop field tamper rejection", tamper),
        ("header overhead", header_overhead),
        ("failover masking", failover),
        ("revocation completeness", revocation),
        ("TRC propagation", trc_propagation),
        ("hijack resistance", hijack),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let took = started.elapsed();
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{took:.2?}]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} [{took:.2?}]", i + 1);
            }
        }
    }
    println!("{}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
