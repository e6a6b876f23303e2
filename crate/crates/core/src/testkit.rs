//! Fixtures shared by unit tests and the test suites: the fig topology, a
//! generated world for it, and beacons built along explicit AS sequences.

use std::collections::BTreeMap;

use crate::beaconing::{Pcb, PcbKind, Signer};
use crate::dataplane::opaque::DEFAULT_EXPIRY_UNITS;
use crate::path_service::PathSegment;
use crate::sim::world::World;
use crate::time::SimTime;
use crate::topology::{AsId, IsdId, LinkType, Topology};

pub const FIG_TOPO: &str = include_str!("../../../fixtures/fig.topo");

/// Letters of the fig topology.
pub fn fig(name: &str) -> AsId {
    match name {
        "X" => AsId::new(1, 1),
        "Y" => AsId::new(1, 2),
        "E" => AsId::new(1, 10),
        "A" => AsId::new(1, 11),
        "F" => AsId::new(1, 12),
        "B" => AsId::new(1, 13),
        "C" => AsId::new(1, 14),
        "G" => AsId::new(1, 15),
        "D" => AsId::new(1, 16),
        "H" => AsId::new(2, 20),
        "I" => AsId::new(4, 10),
        other => other.parse().expect("letter or AS id"),
    }
}

pub fn fig_world() -> World {
    World::generate(Topology::parse(FIG_TOPO).expect("fixture parses"), 7, &BTreeMap::new())
}

fn link_between(topo: &Topology, from: AsId, to: AsId, kind: LinkType, nth: usize) -> (u16, u16) {
    topo.links
        .iter()
        .filter(|l| l.kind == kind && l.remote(from).is_some_and(|(r, _)| r == to))
        .filter(|l| kind != LinkType::ProviderToCustomer || l.a == from)
        .nth(nth)
        .map(|l| (l.local_if(from).unwrap().value(), l.remote(from).unwrap().1.value()))
        .unwrap_or_else(|| panic!("no {kind} link {from} -> {to}"))
}

fn peers_of(topo: &Topology, a: AsId) -> Vec<(AsId, u16, u16)> {
    topo.neighbors(a, LinkType::Peering)
        .unwrap()
        .into_iter()
        .map(|n| (n.remote, n.remote_if.value(), n.local_if.value()))
        .collect()
}

/// A terminated beacon along `path` (origin first), created at `created`.
/// `choice` picks among parallel links per step (0 = first).
pub fn beacon_via(world: &World, kind: PcbKind, path: &[AsId], created: SimTime, choice: &[usize]) -> Pcb {
    let topo = &world.topo;
    let link_kind = match kind {
        PcbKind::Intra => LinkType::ProviderToCustomer,
        PcbKind::Core => LinkType::Core,
    };
    let signer = |a: AsId| Signer {
        secrets: &world.secrets[&a],
        trc_version: 1,
        cert_version: 1,
        expiry_units: DEFAULT_EXPIRY_UNITS,
    };
    let peers = |a: AsId| if kind == PcbKind::Intra { peers_of(topo, a) } else { Vec::new() };
    let isd: IsdId = match kind {
        PcbKind::Intra => *topo.node(path[0]).unwrap().core_in.iter().find(|i| topo.is_member(path[1], **i)).unwrap(),
        PcbKind::Core => *topo.node(path[0]).unwrap().core_in.iter().next().unwrap(),
    };
    let steps: Vec<(u16, u16)> = path
        .windows(2)
        .enumerate()
        .map(|(i, w)| link_between(topo, w[0], w[1], link_kind, choice.get(i).copied().unwrap_or(0)))
        .collect();
    let mut pcb = Pcb::originate(kind, isd, created, &signer(path[0]), steps[0].0, &peers(path[0])).unwrap();
    for i in 1..path.len() {
        let ingress = steps[i - 1].1;
        let egress = steps.get(i).map_or(0, |s| s.0);
        pcb = pcb.extend(&signer(path[i]), ingress, egress, &peers(path[i])).unwrap();
    }
    pcb
}

pub fn beacon(world: &World, kind: PcbKind, path: &[AsId], created: SimTime) -> Pcb {
    beacon_via(world, kind, path, created, &[])
}

pub fn names(s: &str) -> Vec<AsId> {
    s.split_whitespace().map(fig).collect()
}

pub fn up_seg(world: &World, path: &str, created: SimTime) -> PathSegment {
    PathSegment::up(beacon(world, PcbKind::Intra, &names(path), created))
}

pub fn down_seg(world: &World, path: &str, created: SimTime) -> PathSegment {
    PathSegment::down(beacon(world, PcbKind::Intra, &names(path), created))
}

/// Core segment registered at the last AS of `path`.
pub fn core_seg(world: &World, path: &str, created: SimTime) -> PathSegment {
    PathSegment::core(beacon(world, PcbKind::Core, &names(path), created))
}

/// Outcome of pushing a packet through every router on its way.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Walk {
    Delivered(Vec<AsId>),
    Dropped(Vec<AsId>, crate::dataplane::DropReason),
    LinkDown(Vec<AsId>, u16),
}

/// Forward `pkt` from `start` hop by hop with every AS's own key, all links
/// up, at time `now`.
pub fn walk(world: &World, start: AsId, mut pkt: crate::dataplane::Packet, now: SimTime) -> Walk {
    use crate::dataplane::{forward, Action, Arrival, RouterContext};
    use crate::topology::InterfaceId;
    let up = |_: u16| true;
    let mut at = start;
    let mut arrival = Arrival::Local;
    let mut seen = vec![start];
    for _ in 0..256 {
        let ctx = RouterContext {
            key: &world.secrets[&at].mac_secret,
            link_up: &up,
        };
        match forward(&ctx, &mut pkt, arrival, now) {
            Action::Deliver => return Walk::Delivered(seen),
            Action::Drop(r) => return Walk::Dropped(seen, r),
            Action::LinkDown { egress, .. } => return Walk::LinkDown(seen, egress),
            Action::Forward(out) => {
                let Some((next, nif)) = InterfaceId::new(out)
                    .and_then(|i| world.topo.link_at(at, i))
                    .and_then(|l| l.remote(at))
                else {
                    return Walk::Dropped(seen, crate::dataplane::DropReason::Structure);
                };
                at = next;
                arrival = Arrival::Interface(nif.value());
                seen.push(at);
            }
        }
    }
    Walk::Dropped(seen, crate::dataplane::DropReason::Structure)
}
