use std::collections::BTreeSet;
use std::fmt;

use crate::dataplane::header::{COMMON_HEADER_LEN, ForwardingPath};
use crate::dataplane::OpaqueField;
use crate::time::SimTime;
use crate::topology::{AsId, InterfaceId, IsdId, Topology};

/// Declaration order is the ranking tie-break.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CaseTag {
    Immediate,
    AsShortcut,
    PeeringShortcut,
    CoreCombined,
}

impl CaseTag {
    pub fn as_str(self) -> &'static str {
        match self {
            CaseTag::Immediate => "IMMEDIATE",
            CaseTag::AsShortcut => "AS_SHORTCUT",
            CaseTag::PeeringShortcut => "PEERING_SHORTCUT",
            CaseTag::CoreCombined => "CORE_COMBINED",
        }
    }
}

impl fmt::Display for CaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One AS on an end-to-end path. Interfaces are in travel direction; 0 at
/// the two ends. `of` is the field the AS verifies first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PathHop {
    pub as_id: AsId,
    pub ingress: u16,
    pub egress: u16,
    pub of: Option<OpaqueField>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndToEndPath {
    pub case: CaseTag,
    pub hops: Vec<PathHop>,
    /// Indices into `hops` of the ASes where one segment hands over to the
    /// next.
    pub boundaries: Vec<usize>,
    pub expiry: SimTime,
    pub forwarding: ForwardingPath,
    pub isds: BTreeSet<IsdId>,
}

impl EndToEndPath {
    pub fn ases(&self) -> Vec<AsId> {
        self.hops.iter().map(|h| h.as_id).collect()
    }

    /// Number of inter-AS links crossed.
    pub fn links(&self) -> usize {
        self.hops.len() - 1
    }

    pub fn src(&self) -> AsId {
        self.hops[0].as_id
    }

    pub fn dst(&self) -> AsId {
        self.hops[self.hops.len() - 1].as_id
    }

    /// Interface-level identity, used for deduplication and ordering.
    pub fn identity(&self) -> Vec<(AsId, u16, u16)> {
        self.hops.iter().map(|h| (h.as_id, h.ingress, h.egress)).collect()
    }

    /// Bytes of the path region in the packet header.
    pub fn path_region_len(&self) -> usize {
        if self.forwarding.segments.is_empty() {
            0
        } else {
            self.forwarding.region_len()
        }
    }

    /// Header bytes without host addresses.
    pub fn header_len(&self) -> usize {
        COMMON_HEADER_LEN + self.path_region_len()
    }

    /// The same path travelled from destination to source.
    pub fn reversed(&self) -> EndToEndPath {
        let n = self.hops.len();
        EndToEndPath {
            case: self.case,
            hops: self
                .hops
                .iter()
                .rev()
                .map(|h| PathHop {
                    as_id: h.as_id,
                    ingress: h.egress,
                    egress: h.ingress,
                    of: h.of,
                })
                .collect(),
            boundaries: self.boundaries.iter().rev().map(|b| n - 1 - b).collect(),
            expiry: self.expiry,
            forwarding: self.forwarding.reversed(),
            isds: self.isds.clone(),
        }
    }

    /// True if each consecutive pair of hops is joined by a topology link
    /// whose interfaces match and no AS repeats.
    pub fn valid_in(&self, topo: &Topology) -> bool {
        let distinct: BTreeSet<AsId> = self.hops.iter().map(|h| h.as_id).collect();
        if distinct.len() != self.hops.len() {
            return false;
        }
        let ends_ok = self.hops[0].ingress == 0 && self.hops[self.hops.len() - 1].egress == 0;
        ends_ok
            && self.hops.windows(2).all(|w| {
                InterfaceId::new(w[0].egress)
                    .and_then(|i| topo.link_at(w[0].as_id, i))
                    .and_then(|l| l.remote(w[0].as_id))
                    .is_some_and(|(r, rif)| r == w[1].as_id && rif.value() == w[1].ingress)
            })
    }

    /// One-line summary: case, AS sequence, links and header bytes.
    pub fn summary(&self) -> String {
        let seq: Vec<String> = self.hops.iter().map(|h| h.as_id.to_string()).collect();
        format!(
            "{} {} hops={} header={}",
            self.case,
            seq.join(">"),
            self.links(),
            self.header_len()
        )
    }
}
