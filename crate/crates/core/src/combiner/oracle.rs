//! Brute-force enumeration of valley-free AS paths, for checking the
//! combiner on small topologies.

use std::collections::BTreeSet;

use crate::topology::{AsId, LinkType, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Up,
    CoreRun,
    Down,
}

/// All simple AS sequences from `src` to `dst` that climb customer-to-
/// provider links, then optionally cross one peering link or a run of core
/// links, then descend provider-to-customer links.
pub fn enumerate_oracle(topo: &Topology, src: AsId, dst: AsId) -> BTreeSet<Vec<AsId>> {
    let mut out = BTreeSet::new();
    if !topo.contains(src) || !topo.contains(dst) {
        return out;
    }
    let mut path = vec![src];
    walk(topo, dst, Phase::Up, &mut path, &mut out);
    out
}

fn walk(topo: &Topology, dst: AsId, phase: Phase, path: &mut Vec<AsId>, out: &mut BTreeSet<Vec<AsId>>) {
    let cur = *path.last().expect("non-empty");
    if cur == dst {
        out.insert(path.clone());
        return;
    }
    for link in &topo.links {
        let Some((next, _)) = link.remote(cur) else {
            continue;
        };
        if path.contains(&next) {
            continue;
        }
        let next_phase = match (link.kind, phase) {
            (LinkType::ProviderToCustomer, Phase::Up) if link.b == cur => Phase::Up,
            (LinkType::ProviderToCustomer, _) if link.a == cur => Phase::Down,
            (LinkType::Peering, Phase::Up) => Phase::Down,
            (LinkType::Core, Phase::Up | Phase::CoreRun) => Phase::CoreRun,
            _ => continue,
        };
        path.push(next);
        walk(topo, dst, next_phase, path, out);
        path.pop();
    }
}
