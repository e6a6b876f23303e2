//! Seeded random topologies for property tests.

use std::collections::BTreeMap;
use std::fmt::Write;

use rand::seq::SliceRandom;
use rand::Rng;

use super::world::stream;
use crate::topology::{AsId, Topology};

/// A random valid topology of at most `max_ases` ASes (at least 3).
///
/// One or two ISDs, each with one or two core ASes. Every non-core AS has
/// one to three providers among the ASes of its ISD created before it, so
/// the provider graph is acyclic. Some links are doubled and a few peering
/// links join non-core ASes.
pub fn random_topology(seed: u64, max_ases: usize) -> Topology {
    let max_ases = max_ases.max(3);
    let mut rng = stream(seed, "random-topology");
    let isds: u16 = if max_ases >= 6 && rng.gen_bool(0.4) { 2 } else { 1 };
    let mut doc = String::new();
    let mut next_if: BTreeMap<AsId, u16> = BTreeMap::new();
    let mut links: Vec<(AsId, AsId, &str)> = Vec::new();
    let mut per_isd: BTreeMap<u16, Vec<AsId>> = BTreeMap::new();
    let mut cores: Vec<AsId> = Vec::new();

    for isd in 1..=isds {
        writeln!(doc, "isd {isd}").unwrap();
        let n = rng.gen_range(1..=2);
        for c in 1..=n {
            let a = AsId::new(isd, c);
            writeln!(doc, "as {a} core={isd}").unwrap();
            per_isd.entry(isd).or_default().push(a);
            cores.push(a);
        }
        if n == 2 {
            let (x, y) = (AsId::new(isd, 1), AsId::new(isd, 2));
            links.push((x, y, "CORE"));
            if rng.gen_bool(0.2) {
                links.push((x, y, "CORE"));
            }
        }
    }
    if isds == 2 {
        links.push((AsId::new(1, 1), AsId::new(2, 1), "CORE"));
    }

    let total = rng.gen_range(cores.len() + 1..=max_ases);
    for i in 0..total - cores.len() {
        let isd = rng.gen_range(1..=isds);
        let a = AsId::new(isd, 10 + i as u32);
        writeln!(doc, "as {a}").unwrap();
        let pool = per_isd.get(&isd).cloned().unwrap_or_default();
        let k = rng.gen_range(1..=pool.len().min(3));
        let providers: Vec<AsId> = pool.choose_multiple(&mut rng, k).copied().collect();
        for p in providers {
            links.push((p, a, "P2C"));
            if rng.gen_bool(0.1) {
                links.push((p, a, "P2C"));
            }
        }
        per_isd.entry(isd).or_default().push(a);
    }

    let leaves: Vec<AsId> = per_isd.values().flatten().copied().filter(|a| !cores.contains(a)).collect();
    if leaves.len() >= 2 {
        for _ in 0..rng.gen_range(0..=2) {
            let pick: Vec<AsId> = leaves.choose_multiple(&mut rng, 2).copied().collect();
            let (x, y) = (pick[0], pick[1]);
            if !links.iter().any(|&(p, q, _)| (p == x && q == y) || (p == y && q == x)) {
                links.push((x, y, "PEER"));
            }
        }
    }

    for (a, b, kind) in links {
        let ia = next_if.entry(a).or_insert(0);
        *ia += 1;
        let ia = *ia;
        let ib = next_if.entry(b).or_insert(0);
        *ib += 1;
        writeln!(doc, "link {a} {ia} {b} {ib} {kind}").unwrap();
    }
    Topology::parse(&doc).unwrap_or_else(|e| panic!("generated topology is invalid: {e}\n{doc}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_topologies_are_valid_and_seeded() {
        for seed in 0..200 {
            let t = random_topology(seed, 12);
            assert!(t.ases.len() <= 12 && t.ases.len() >= 2);
            assert_eq!(t, random_topology(seed, 12));
        }
    }
}
