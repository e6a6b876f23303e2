use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};

use super::path::{CaseTag, EndToEndPath, PathHop};
use crate::beaconing::PeerEntry;
use crate::dataplane::header::{MAX_HOPS, MAX_SEGMENTS};
use crate::dataplane::{ForwardingPath, InfoField, OpaqueField, SegmentFields, SegmentKind};
use crate::path_service::PathSegment;
use crate::time::SimTime;
use crate::topology::{AsId, Topology};

/// One forwarding segment under construction.
struct Part {
    fields: SegmentFields,
    /// Usable hops in travel direction.
    travel: Vec<PathHop>,
    expiry: SimTime,
    isd: u16,
}

fn info(seg: &PathSegment, kind: SegmentKind, cons_dir: bool, shortcut: bool, peering: bool) -> InfoField {
    InfoField {
        timestamp: seg.pcb.info.timestamp,
        isd: seg.pcb.info.isd.value(),
        cons_dir,
        shortcut,
        peering,
        kind,
    }
}

fn part(
    seg: &PathSegment,
    kind: SegmentKind,
    cons_dir: bool,
    flags: (bool, bool),
    cons_ofs: Vec<OpaqueField>,
    travel: Vec<PathHop>,
) -> Part {
    let ofs = if cons_dir { cons_ofs } else { cons_ofs.into_iter().rev().collect() };
    Part {
        fields: SegmentFields {
            info: info(seg, kind, cons_dir, flags.0, flags.1),
            ofs,
        },
        travel,
        expiry: seg.expiry(),
        isd: seg.pcb.info.isd.value(),
    }
}

fn hop(as_id: AsId, ingress: u16, egress: u16, of: OpaqueField) -> PathHop {
    PathHop {
        as_id,
        ingress,
        egress,
        of: Some(of),
    }
}

/// A whole segment in its own travel direction.
fn whole(seg: &PathSegment) -> Part {
    let cons_ofs = seg.pcb.hops.iter().map(|h| h.of).collect();
    let travel = seg.hops().into_iter().map(|h| hop(h.as_id, h.ingress, h.egress, h.of)).collect();
    part(seg, seg.kind, seg.cons_dir, (false, false), cons_ofs, travel)
}

/// Up segment cut at construction index `z`: travel from the leaf to hop
/// `z`, with hop `z - 1` kept as a verify-only field.
fn up_from(u: &PathSegment, z: usize) -> Part {
    let hs = &u.pcb.hops;
    let mut cons_ofs = vec![hs[z - 1].of.with_verify_only(true)];
    cons_ofs.extend(hs[z..].iter().map(|h| h.of));
    let travel = hs[z..].iter().rev().map(|h| hop(h.as_id, h.egress, h.ingress, h.of)).collect();
    part(u, SegmentKind::Up, false, (true, false), cons_ofs, travel)
}

/// Down segment entered at construction index `z`.
fn down_from(d: &PathSegment, z: usize) -> Part {
    let hs = &d.pcb.hops;
    let mut cons_ofs = vec![hs[z - 1].of.with_verify_only(true)];
    cons_ofs.extend(hs[z..].iter().map(|h| h.of));
    let travel = hs[z..].iter().map(|h| hop(h.as_id, h.ingress, h.egress, h.of)).collect();
    part(d, SegmentKind::Down, true, (true, false), cons_ofs, travel)
}

/// Up segment leaving hop `i` over the peering link of `p`.
fn up_peer(u: &PathSegment, i: usize, p: &PeerEntry) -> Part {
    let hs = &u.pcb.hops;
    let mut cons_ofs = vec![hs[i].of.with_verify_only(true), p.of];
    cons_ofs.extend(hs[i + 1..].iter().map(|h| h.of));
    let mut travel: Vec<PathHop> = hs[i + 1..].iter().rev().map(|h| hop(h.as_id, h.egress, h.ingress, h.of)).collect();
    travel.push(hop(hs[i].as_id, hs[i].egress, p.local_if, p.of));
    part(u, SegmentKind::Up, false, (false, true), cons_ofs, travel)
}

/// Down segment entered at hop `j` over the peering link of `q`.
fn down_peer(d: &PathSegment, j: usize, q: &PeerEntry) -> Part {
    let hs = &d.pcb.hops;
    let mut cons_ofs = vec![hs[j].of.with_verify_only(true), q.of];
    cons_ofs.extend(hs[j + 1..].iter().map(|h| h.of));
    let mut travel = vec![hop(hs[j].as_id, q.local_if, hs[j].egress, q.of)];
    travel.extend(hs[j + 1..].iter().map(|h| hop(h.as_id, h.ingress, h.egress, h.of)));
    part(d, SegmentKind::Down, true, (false, true), cons_ofs, travel)
}

/// Join parts into a path; `None` if the result repeats an AS or does not
/// fit a header.
fn assemble(case: CaseTag, parts: Vec<Part>) -> Option<EndToEndPath> {
    if parts.is_empty() || parts.len() > MAX_SEGMENTS {
        return None;
    }
    let mut hops: Vec<PathHop> = Vec::new();
    let mut boundaries = Vec::new();
    for (pi, p) in parts.iter().enumerate() {
        for (k, h) in p.travel.iter().enumerate() {
            match hops.last_mut() {
                Some(last) if k == 0 && last.as_id == h.as_id => {
                    last.egress = h.egress;
                    boundaries.push(hops.len() - 1);
                }
                _ => {
                    if k == 0 && pi > 0 {
                        boundaries.push(hops.len() - 1);
                    }
                    hops.push(*h);
                }
            }
        }
    }
    let first = hops.first_mut()?;
    first.ingress = 0;
    let last = hops.last_mut()?;
    last.egress = 0;
    let distinct: BTreeSet<AsId> = hops.iter().map(|h| h.as_id).collect();
    if distinct.len() != hops.len() {
        return None;
    }
    let mut isds: BTreeSet<_> = hops.iter().map(|h| h.as_id.isd).collect();
    isds.extend(parts.iter().filter_map(|p| crate::topology::IsdId::new(p.isd)));
    let forwarding = ForwardingPath {
        segments: parts.iter().map(|p| p.fields.clone()).collect(),
    };
    if forwarding.hop_fields() > MAX_HOPS {
        return None;
    }
    Some(EndToEndPath {
        case,
        expiry: parts.iter().map(|p| p.expiry).min()?,
        hops,
        boundaries,
        forwarding,
        isds,
    })
}

fn index_of(seg: &PathSegment, a: AsId) -> Option<usize> {
    seg.pcb.hops.iter().position(|h| h.as_id == a)
}

/// Orient a core segment to run from `from` to `to`.
fn oriented_core(c: &PathSegment, from: AsId, to: AsId) -> Option<PathSegment> {
    if c.first_as() == from && c.last_as() == to {
        Some(c.clone())
    } else if c.first_as() == to && c.last_as() == from {
        Some(c.invert())
    } else {
        None
    }
}

/// Every end-to-end path obtainable from the given segments, best first.
/// Up segments must start at `src` unless `src` is core; down segments must
/// end at `dst` unless `dst` is core.
pub fn combine(
    ups: &[PathSegment],
    cores: &[PathSegment],
    downs: &[PathSegment],
    src: AsId,
    dst: AsId,
    topo: &Topology,
) -> Vec<EndToEndPath> {
    if src == dst {
        return vec![EndToEndPath {
            case: CaseTag::Immediate,
            hops: vec![PathHop {
                as_id: src,
                ingress: 0,
                egress: 0,
                of: None,
            }],
            boundaries: Vec::new(),
            expiry: SimTime::MAX,
            forwarding: ForwardingPath::default(),
            isds: BTreeSet::from([src.isd]),
        }];
    }
    let ups: Vec<Option<&PathSegment>> = if topo.is_core(src) {
        vec![None]
    } else {
        ups.iter()
            .filter(|u| u.kind == SegmentKind::Up && u.first_as() == src)
            .map(Some)
            .collect()
    };
    let downs: Vec<Option<&PathSegment>> = if topo.is_core(dst) {
        vec![None]
    } else {
        downs
            .iter()
            .filter(|d| d.kind == SegmentKind::Down && d.last_as() == dst)
            .map(Some)
            .collect()
    };

    let mut out: Vec<EndToEndPath> = Vec::new();
    let mut emit = |case: CaseTag, parts: Vec<Part>| {
        if let Some(p) = assemble(case, parts) {
            out.push(p);
        }
    };

    for &u in &ups {
        if let Some(u) = u {
            if let Some(j) = index_of(u, dst) {
                if j == 0 {
                    emit(CaseTag::Immediate, vec![whole(u)]);
                } else {
                    emit(CaseTag::AsShortcut, vec![up_from(u, j)]);
                }
            }
        }
        for &d in &downs {
            if let Some(d) = d {
                if let Some(i) = index_of(d, src) {
                    if i == 0 {
                        emit(CaseTag::Immediate, vec![whole(d)]);
                    } else {
                        emit(CaseTag::AsShortcut, vec![down_from(d, i)]);
                    }
                }
            }
            let u_core = u.map_or(src, |u| u.origin());
            let d_core = d.map_or(dst, |d| d.origin());
            if let (Some(u), Some(d)) = (u, d) {
                if u_core == d_core {
                    emit(CaseTag::Immediate, vec![whole(u), whole(d)]);
                }
                for (zu, h) in u.pcb.hops.iter().enumerate().skip(1) {
                    if h.as_id == src || h.as_id == dst {
                        continue;
                    }
                    if let Some(zd) = index_of(d, h.as_id).filter(|&z| z > 0) {
                        emit(CaseTag::AsShortcut, vec![up_from(u, zu), down_from(d, zd)]);
                    }
                }
                for (i, uh) in u.pcb.hops.iter().enumerate() {
                    for p in &uh.peers {
                        for (j, dh) in d.pcb.hops.iter().enumerate() {
                            if dh.as_id != p.peer {
                                continue;
                            }
                            for q in &dh.peers {
                                if q.peer == uh.as_id && q.peer_if == p.local_if && q.local_if == p.peer_if {
                                    emit(CaseTag::PeeringShortcut, vec![up_peer(u, i, p), down_peer(d, j, q)]);
                                }
                            }
                        }
                    }
                }
            }
            if u_core != d_core {
                for c in cores.iter().filter(|c| c.kind == SegmentKind::Core) {
                    let Some(c) = oriented_core(c, u_core, d_core) else {
                        continue;
                    };
                    let mut parts = Vec::new();
                    parts.extend(u.map(whole));
                    parts.push(whole(&c));
                    parts.extend(d.map(whole));
                    emit(CaseTag::CoreCombined, parts);
                }
            }
        }
    }
    rank(out)
}

/// Deduplicate by interface-level identity (keeping the best case) and sort
/// by links, later expiry, case, identity.
pub fn rank(paths: Vec<EndToEndPath>) -> Vec<EndToEndPath> {
    let mut best: BTreeMap<Vec<(AsId, u16, u16)>, EndToEndPath> = BTreeMap::new();
    for p in paths {
        let id = p.identity();
        match best.get(&id) {
            Some(b) if (b.case, Reverse(b.expiry)) <= (p.case, Reverse(p.expiry)) => {}
            _ => {
                best.insert(id, p);
            }
        }
    }
    let mut v: Vec<EndToEndPath> = best.into_values().collect();
    v.sort_by_cached_key(|p| (p.links(), Reverse(p.expiry), p.case, p.identity()));
    v
}
