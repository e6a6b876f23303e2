use crate::beaconing::{PeerEntry, Pcb, PcbKind};
use crate::dataplane::{OpaqueField, SegmentKind};
use crate::time::SimTime;
use crate::topology::{AsId, InterfaceId, LinkType, Topology};

/// A registered segment: a terminated beacon plus the direction it is
/// travelled in. Up segments run against construction order (leaf first),
/// down segments along it. Core segments as stored run from the registering
/// core back to the origin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathSegment {
    pub kind: SegmentKind,
    pub cons_dir: bool,
    pub pcb: Pcb,
}

/// One hop seen in travel direction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegHop {
    pub as_id: AsId,
    pub ingress: u16,
    pub egress: u16,
    pub of: OpaqueField,
    pub peers: Vec<PeerEntry>,
}

impl PathSegment {
    pub fn up(pcb: Pcb) -> Self {
        PathSegment {
            kind: SegmentKind::Up,
            cons_dir: false,
            pcb,
        }
    }

    pub fn down(pcb: Pcb) -> Self {
        PathSegment {
            kind: SegmentKind::Down,
            cons_dir: true,
            pcb,
        }
    }

    pub fn core(pcb: Pcb) -> Self {
        PathSegment {
            kind: SegmentKind::Core,
            cons_dir: false,
            pcb,
        }
    }

    /// Reverse the travel direction. Opaque fields are untouched.
    pub fn invert(&self) -> Self {
        let kind = match self.kind {
            SegmentKind::Up => SegmentKind::Down,
            SegmentKind::Down => SegmentKind::Up,
            SegmentKind::Core => SegmentKind::Core,
        };
        PathSegment {
            kind,
            cons_dir: !self.cons_dir,
            pcb: self.pcb.clone(),
        }
    }

    pub fn hops(&self) -> Vec<SegHop> {
        let view = |h: &crate::beaconing::HopEntry| {
            let (ingress, egress) = if self.cons_dir { (h.ingress, h.egress) } else { (h.egress, h.ingress) };
            SegHop {
                as_id: h.as_id,
                ingress,
                egress,
                of: h.of,
                peers: h.peers.clone(),
            }
        };
        if self.cons_dir {
            self.pcb.hops.iter().map(view).collect()
        } else {
            self.pcb.hops.iter().rev().map(view).collect()
        }
    }

    /// AS sequence in travel order.
    pub fn ases(&self) -> Vec<AsId> {
        let mut v = self.pcb.ases();
        if !self.cons_dir {
            v.reverse();
        }
        v
    }

    pub fn first_as(&self) -> AsId {
        *self.ases().first().expect("segments are non-empty")
    }

    pub fn last_as(&self) -> AsId {
        *self.ases().last().expect("segments are non-empty")
    }

    /// The leaf of an intra-ISD segment (the registering AS).
    pub fn leaf(&self) -> AsId {
        self.pcb.hops.last().expect("segments are non-empty").as_id
    }

    pub fn origin(&self) -> AsId {
        self.pcb.info.origin
    }

    pub fn expiry(&self) -> SimTime {
        self.pcb.expiry()
    }

    pub fn hop_count(&self) -> usize {
        self.pcb.hops.len()
    }

    pub fn uses_interface(&self, as_id: AsId, interface: u16) -> bool {
        self.pcb.uses_interface(as_id, interface)
    }

    /// Byte encoding: kind, direction, then the beacon.
    pub fn encode(&self) -> Vec<u8> {
        let kind = match self.kind {
            SegmentKind::Up => 0,
            SegmentKind::Down => 1,
            SegmentKind::Core => 2,
        };
        let mut out = vec![kind, self.cons_dir as u8];
        out.extend_from_slice(&self.pcb.encode());
        out
    }

    pub fn decode(b: &[u8]) -> Option<Self> {
        let kind = match b.first()? {
            0 => SegmentKind::Up,
            1 => SegmentKind::Down,
            2 => SegmentKind::Core,
            _ => return None,
        };
        let cons_dir = match b.get(1)? {
            0 => false,
            1 => true,
            _ => return None,
        };
        Some(PathSegment {
            kind,
            cons_dir,
            pcb: Pcb::decode(&b[2..])?,
        })
    }

    /// Up segments end at a core AS, down segments start at one, core
    /// segments hold only core ASes.
    pub fn orientation_ok(&self, topo: &Topology) -> bool {
        let isd = self.pcb.info.isd;
        match (self.kind, self.pcb.info.kind) {
            (SegmentKind::Up, PcbKind::Intra) => !self.cons_dir && topo.is_core_in(self.last_as(), isd),
            (SegmentKind::Down, PcbKind::Intra) => self.cons_dir && topo.is_core_in(self.first_as(), isd),
            (SegmentKind::Core, PcbKind::Core) => self.pcb.hops.iter().all(|h| topo.is_core(h.as_id)),
            _ => false,
        }
    }

    /// True if consecutive hops are joined by a link of the topology with
    /// matching interfaces and the right type.
    pub fn contiguous_in(&self, topo: &Topology) -> bool {
        let hops = &self.pcb.hops;
        let Some(first) = hops.first() else {
            return false;
        };
        if first.ingress != 0 || !self.pcb.is_terminated() {
            return false;
        }
        let want = match self.pcb.info.kind {
            PcbKind::Intra => LinkType::ProviderToCustomer,
            PcbKind::Core => LinkType::Core,
        };
        hops.windows(2).all(|w| {
            let Some(link) = InterfaceId::new(w[0].egress).and_then(|i| topo.link_at(w[0].as_id, i)) else {
                return false;
            };
            link.kind == want
                && (want != LinkType::ProviderToCustomer || link.a == w[0].as_id)
                && link.remote(w[0].as_id).is_some_and(|(r, rif)| r == w[1].as_id && rif.value() == w[1].ingress)
        })
    }
}
