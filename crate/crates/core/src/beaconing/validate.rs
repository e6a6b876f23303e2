use thiserror::Error;

use super::pcb::{Pcb, PcbKind};
use crate::crypto::verify;
use crate::dataplane::opaque::FLAG_PEERING;
use crate::time::SimTime;
use crate::topology::{AsId, InterfaceId, IsdId, LinkType, Topology};
use crate::trust::TrcStore;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PcbInvalid {
    #[error("structure")]
    Structure,
    #[error("signature")]
    Signature,
    #[error("adjacency")]
    Adjacency,
    #[error("loop")]
    Loop,
    #[error("expired")]
    Expired,
    #[error("cert unavailable")]
    CertUnavailable,
    #[error("trc")]
    Trc,
}

impl PcbInvalid {
    pub fn as_str(self) -> &'static str {
        match self {
            PcbInvalid::Structure => "structure",
            PcbInvalid::Signature => "signature",
            PcbInvalid::Adjacency => "adjacency",
            PcbInvalid::Loop => "loop",
            PcbInvalid::Expired => "expired",
            PcbInvalid::CertUnavailable => "cert-unavailable",
            PcbInvalid::Trc => "trc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Valid,
    Invalid(PcbInvalid),
    /// A hop announces a newer TRC than the local store holds. The caller
    /// fetches it from the sender and validates again.
    StaleTrc { isd: IsdId, version: u32 },
}

/// Supplies verified public keys of AS certificates.
pub trait CertSource {
    fn public_key(&mut self, as_id: AsId, cert_version: u32, now: SimTime) -> Option<[u8; 32]>;
}

fn link_matches(topo: &Topology, from: AsId, egress: u16, kind: PcbKind) -> Option<(AsId, u16)> {
    let link = topo.link_at(from, InterfaceId::new(egress)?)?;
    let ok = match kind {
        PcbKind::Intra => link.kind == LinkType::ProviderToCustomer && link.a == from,
        PcbKind::Core => link.kind == LinkType::Core,
    };
    let (remote, rif) = link.remote(from)?;
    ok.then_some((remote, rif.value()))
}

pub fn validate_pcb(
    pcb: &Pcb,
    topo: &Topology,
    trcs: &TrcStore,
    certs: &mut dyn CertSource,
    now: SimTime,
) -> Verdict {
    use PcbInvalid::*;
    let invalid = Verdict::Invalid;
    let Some(first) = pcb.hops.first() else {
        return invalid(Structure);
    };
    if first.as_id != pcb.info.origin || first.ingress != 0 {
        return invalid(Structure);
    }

    let mut stale: Option<(IsdId, u32)> = None;
    for h in &pcb.hops {
        let isd = h.as_id.isd;
        if h.trc_version > trcs.current_version(isd) && stale.is_none_or(|(_, v)| h.trc_version > v) {
            stale = Some((isd, h.trc_version));
        }
    }
    if let Some((isd, version)) = stale {
        return Verdict::StaleTrc { isd, version };
    }

    for (i, h) in pcb.hops.iter().enumerate() {
        let Some(key) = certs.public_key(h.as_id, h.cert_version, now) else {
            return invalid(CertUnavailable);
        };
        if !verify(&key, &pcb.signed_bytes(i), &h.signature).unwrap_or(false) {
            return invalid(Signature);
        }
    }

    for (i, h) in pcb.hops.iter().enumerate() {
        if pcb.hops[..i].iter().any(|p| p.as_id == h.as_id) {
            return invalid(Loop);
        }
    }

    let isd = pcb.info.isd;
    for (i, h) in pcb.hops.iter().enumerate() {
        let role_ok = match pcb.info.kind {
            PcbKind::Intra if i == 0 => topo.is_core_in(h.as_id, isd),
            PcbKind::Intra => topo.is_member(h.as_id, isd) && !topo.is_core_in(h.as_id, isd),
            PcbKind::Core => topo.is_core(h.as_id),
        };
        if !role_ok {
            return invalid(Structure);
        }
        if h.of.flags != 0 || h.of.ingress != h.ingress || h.of.egress != h.egress {
            return invalid(Structure);
        }
        if i > 0 && h.ingress == 0 {
            return invalid(Structure);
        }
        let last = i + 1 == pcb.hops.len();
        if !last || h.egress != 0 {
            let Some((remote, rif)) = link_matches(topo, h.as_id, h.egress, pcb.info.kind) else {
                return invalid(Adjacency);
            };
            if let Some(next) = pcb.hops.get(i + 1) {
                if (remote, rif) != (next.as_id, next.ingress) {
                    return invalid(Adjacency);
                }
            }
        }
        for p in &h.peers {
            if p.of.flags != FLAG_PEERING || p.of.ingress != p.local_if || p.of.egress != h.egress {
                return invalid(Structure);
            }
            let link = InterfaceId::new(p.local_if).and_then(|i| topo.link_at(h.as_id, i));
            let ok = link.is_some_and(|l| {
                l.kind == LinkType::Peering
                    && l.remote(h.as_id).is_some_and(|(r, rif)| r == p.peer && rif.value() == p.peer_if)
            });
            if !ok {
                return invalid(Adjacency);
            }
        }
        let ts = pcb.info.timestamp;
        if now >= h.of.expires_at(ts) || h.peers.iter().any(|p| now >= p.of.expires_at(ts)) {
            return invalid(Expired);
        }
    }
    Verdict::Valid
}

/// Certificate lookup against a directory of issued AS certificates, with
/// each certificate checked against the local TRC store once and remembered.
pub struct DirectoryCerts<'a> {
    pub certs: &'a std::collections::BTreeMap<AsId, crate::trust::AsCert>,
    pub trcs: &'a TrcStore,
    pub verified: &'a mut std::collections::BTreeSet<(AsId, u32)>,
}

impl CertSource for DirectoryCerts<'_> {
    fn public_key(&mut self, as_id: AsId, cert_version: u32, now: SimTime) -> Option<[u8; 32]> {
        let cert = self.certs.get(&as_id).filter(|c| c.version == cert_version)?;
        if cert.subject != as_id {
            return None;
        }
        if !self.verified.contains(&(as_id, cert_version)) {
            if crate::trust::validate_cert_chain(cert, self.trcs, now) != Ok(true) {
                return None;
            }
            self.verified.insert((as_id, cert_version));
        }
        (now >= cert.valid_from && now < cert.valid_until).then_some(cert.public)
    }
}
