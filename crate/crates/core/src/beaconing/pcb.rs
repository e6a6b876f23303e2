//! Path construction beacons and their canonical encoding.
//!
//! ```text
//! info (16 bytes)  timestamp 4 | origin AS 6 | ISD 2 | flags 1 | hop count 1 | reserved 2
//! hop record       length 2 | body | signature length 2 | signature
//! body             AS 6 | ingress 2 | egress 2 | opaque field 8 | TRC version 4
//!                  | cert version 4 | peer count 1 | peers (AS 6, peer if 2, local if 2, OF 8)*
//! ```
//!
//! Hop `i` signs the info field (with hop count `i + 1`), the complete records
//! of hops `0..i` and its own body.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::crypto::{AsSecrets, Signature, SIGNATURE_LEN};
use crate::dataplane::opaque::{build_of, OpaqueField, FLAG_PEERING, OF_LEN};
use crate::time::SimTime;
use crate::topology::{AsId, IsdId};

pub const INFO_LEN: usize = 16;
const PEER_LEN: usize = 6 + 2 + 2 + OF_LEN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PcbKind {
    /// Intra-ISD beacon, propagated from a core AS down provider-customer links.
    Intra,
    /// Core beacon, propagated among core ASes over core links.
    Core,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PcbInfo {
    /// Creation time in whole seconds.
    pub timestamp: u32,
    pub origin: AsId,
    pub isd: IsdId,
    pub kind: PcbKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PeerEntry {
    pub peer: AsId,
    /// The peer's interface on the peering link.
    pub peer_if: u16,
    /// This AS's interface on the peering link.
    pub local_if: u16,
    pub of: OpaqueField,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HopEntry {
    pub as_id: AsId,
    /// 0 at the origin.
    pub ingress: u16,
    /// 0 on a terminated beacon.
    pub egress: u16,
    pub of: OpaqueField,
    pub peers: Vec<PeerEntry>,
    pub trc_version: u32,
    pub cert_version: u32,
    pub signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pcb {
    pub info: PcbInfo,
    pub hops: Vec<HopEntry>,
}

/// Interface-level identity of a beacon: the hops it traverses, independent
/// of timestamps and signatures.
pub type HopKey = (AsId, u16, u16);

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum PcbError {
    #[error("AS {0} already on the beacon")]
    Loop(AsId),
    #[error("interface id out of range")]
    Interface,
    #[error("beacon already terminated")]
    Terminated,
}

/// What an AS needs to sign a hop.
pub struct Signer<'a> {
    pub secrets: &'a AsSecrets,
    pub trc_version: u32,
    pub cert_version: u32,
    pub expiry_units: u8,
}

impl PcbInfo {
    pub fn encode(&self, hop_count: u8) -> [u8; INFO_LEN] {
        let mut b = [0u8; INFO_LEN];
        b[0..4].copy_from_slice(&self.timestamp.to_be_bytes());
        b[4..10].copy_from_slice(&self.origin.to_bytes());
        b[10..12].copy_from_slice(&self.isd.value().to_be_bytes());
        b[12] = match self.kind {
            PcbKind::Intra => 0,
            PcbKind::Core => 1,
        };
        b[13] = hop_count;
        b
    }

    pub fn created(&self) -> SimTime {
        SimTime::from_secs(self.timestamp as u64)
    }
}

impl HopEntry {
    fn body(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(31 + self.peers.len() * PEER_LEN);
        b.extend_from_slice(&self.as_id.to_bytes());
        b.extend_from_slice(&self.ingress.to_be_bytes());
        b.extend_from_slice(&self.egress.to_be_bytes());
        b.extend_from_slice(&self.of.to_bytes());
        b.extend_from_slice(&self.trc_version.to_be_bytes());
        b.extend_from_slice(&self.cert_version.to_be_bytes());
        b.push(self.peers.len() as u8);
        for p in &self.peers {
            b.extend_from_slice(&p.peer.to_bytes());
            b.extend_from_slice(&p.peer_if.to_be_bytes());
            b.extend_from_slice(&p.local_if.to_be_bytes());
            b.extend_from_slice(&p.of.to_bytes());
        }
        b
    }

    fn record(&self) -> Vec<u8> {
        let mut r = self.body();
        r.extend_from_slice(&(SIGNATURE_LEN as u16).to_be_bytes());
        r.extend_from_slice(&self.signature.0);
        r
    }

    fn decode_record(b: &[u8]) -> Option<Self> {
        let as_id = AsId::from_bytes(b.get(0..6)?.try_into().ok()?)?;
        let u16_at = |i: usize| -> Option<u16> { Some(u16::from_be_bytes(b.get(i..i + 2)?.try_into().ok()?)) };
        let u32_at = |i: usize| -> Option<u32> { Some(u32::from_be_bytes(b.get(i..i + 4)?.try_into().ok()?)) };
        let of_at = |i: usize| -> Option<OpaqueField> { Some(OpaqueField::from_bytes(b.get(i..i + OF_LEN)?.try_into().ok()?)) };
        let ingress = u16_at(6)?;
        let egress = u16_at(8)?;
        let of = of_at(10)?;
        let trc_version = u32_at(18)?;
        let cert_version = u32_at(22)?;
        let n = *b.get(26)? as usize;
        let mut at = 27;
        let mut peers = Vec::with_capacity(n);
        for _ in 0..n {
            peers.push(PeerEntry {
                peer: AsId::from_bytes(b.get(at..at + 6)?.try_into().ok()?)?,
                peer_if: u16_at(at + 6)?,
                local_if: u16_at(at + 8)?,
                of: of_at(at + 10)?,
            });
            at += PEER_LEN;
        }
        if u16_at(at)? as usize != SIGNATURE_LEN || b.len() != at + 2 + SIGNATURE_LEN {
            return None;
        }
        Some(HopEntry {
            as_id,
            ingress,
            egress,
            of,
            peers,
            trc_version,
            cert_version,
            signature: Signature(b[at + 2..].try_into().ok()?),
        })
    }
}

impl Pcb {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.info.encode(self.hops.len() as u8).to_vec();
        for h in &self.hops {
            let r = h.record();
            out.extend_from_slice(&(r.len() as u16).to_be_bytes());
            out.extend_from_slice(&r);
        }
        out
    }

    pub fn decode(b: &[u8]) -> Option<Pcb> {
        let info_bytes = b.get(..INFO_LEN)?;
        if info_bytes[14..16] != [0, 0] {
            return None;
        }
        let info = PcbInfo {
            timestamp: u32::from_be_bytes(info_bytes[0..4].try_into().ok()?),
            origin: AsId::from_bytes(info_bytes[4..10].try_into().ok()?)?,
            isd: IsdId::new(u16::from_be_bytes(info_bytes[10..12].try_into().ok()?))?,
            kind: match info_bytes[12] {
                0 => PcbKind::Intra,
                1 => PcbKind::Core,
                _ => return None,
            },
        };
        let n = info_bytes[13] as usize;
        let mut hops = Vec::with_capacity(n);
        let mut at = INFO_LEN;
        for _ in 0..n {
            let len = u16::from_be_bytes(b.get(at..at + 2)?.try_into().ok()?) as usize;
            hops.push(HopEntry::decode_record(b.get(at + 2..at + 2 + len)?)?);
            at += 2 + len;
        }
        (at == b.len()).then_some(Pcb { info, hops })
    }

    /// Bytes covered by hop `i`'s signature.
    pub fn signed_bytes(&self, i: usize) -> Vec<u8> {
        let mut out = self.info.encode((i + 1) as u8).to_vec();
        for h in &self.hops[..i] {
            out.extend_from_slice(&h.record());
        }
        out.extend_from_slice(&self.hops[i].body());
        out
    }

    fn sign_last(&mut self, secrets: &AsSecrets) {
        let i = self.hops.len() - 1;
        let sig = secrets.signing.sign(&self.signed_bytes(i));
        self.hops[i].signature = sig;
    }

    fn make_hop(
        &self,
        signer: &Signer<'_>,
        ingress: u16,
        egress: u16,
        peers: &[(AsId, u16, u16)],
    ) -> Result<HopEntry, PcbError> {
        let key = &signer.secrets.mac_secret;
        let ts = self.info.timestamp;
        let prior = self.hops.last().map(|h| h.of);
        let of = build_of(key, 0, signer.expiry_units, ingress, egress, ts, prior.as_ref())
            .map_err(|_| PcbError::Interface)?;
        let peers = peers
            .iter()
            .map(|&(peer, peer_if, local_if)| {
                build_of(key, FLAG_PEERING, signer.expiry_units, local_if, egress, ts, Some(&of))
                    .map(|pof| PeerEntry {
                        peer,
                        peer_if,
                        local_if,
                        of: pof,
                    })
                    .map_err(|_| PcbError::Interface)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(HopEntry {
            as_id: signer.secrets.owner,
            ingress,
            egress,
            of,
            peers,
            trc_version: signer.trc_version,
            cert_version: signer.cert_version,
            signature: Signature([0; SIGNATURE_LEN]),
        })
    }

    /// A fresh beacon leaving the origin on `egress`.
    pub fn originate(
        kind: PcbKind,
        isd: IsdId,
        now: SimTime,
        signer: &Signer<'_>,
        egress: u16,
        peers: &[(AsId, u16, u16)],
    ) -> Result<Pcb, PcbError> {
        let mut pcb = Pcb {
            info: PcbInfo {
                timestamp: now.whole_secs_u32(),
                origin: signer.secrets.owner,
                isd,
                kind,
            },
            hops: Vec::new(),
        };
        let hop = pcb.make_hop(signer, 0, egress, peers)?;
        pcb.hops.push(hop);
        pcb.sign_last(signer.secrets);
        Ok(pcb)
    }

    /// Append the signer's hop. `egress == 0` terminates the beacon.
    pub fn extend(
        &self,
        signer: &Signer<'_>,
        ingress: u16,
        egress: u16,
        peers: &[(AsId, u16, u16)],
    ) -> Result<Pcb, PcbError> {
        let me = signer.secrets.owner;
        if self.hops.iter().any(|h| h.as_id == me) {
            return Err(PcbError::Loop(me));
        }
        if self.is_terminated() {
            return Err(PcbError::Terminated);
        }
        let mut pcb = self.clone();
        let hop = pcb.make_hop(signer, ingress, egress, peers)?;
        pcb.hops.push(hop);
        pcb.sign_last(signer.secrets);
        Ok(pcb)
    }

    pub fn is_terminated(&self) -> bool {
        self.hops.len() > 1 && self.hops.last().is_some_and(|h| h.egress == 0)
    }

    pub fn identity(&self) -> Vec<HopKey> {
        self.hops.iter().map(|h| (h.as_id, h.ingress, h.egress)).collect()
    }

    pub fn hop_set(&self) -> BTreeSet<HopKey> {
        self.hops.iter().map(|h| (h.as_id, h.ingress, h.egress)).collect()
    }

    pub fn ases(&self) -> Vec<AsId> {
        self.hops.iter().map(|h| h.as_id).collect()
    }

    pub fn contains_as(&self, as_id: AsId) -> bool {
        self.hops.iter().any(|h| h.as_id == as_id)
    }

    /// True if any hop (or peer entry) uses `interface` of `as_id`.
    pub fn uses_interface(&self, as_id: AsId, interface: u16) -> bool {
        self.hops.iter().any(|h| {
            h.as_id == as_id
                && (h.ingress == interface
                    || h.egress == interface
                    || h.peers.iter().any(|p| p.local_if == interface))
                || h.peers.iter().any(|p| p.peer == as_id && p.peer_if == interface)
        })
    }

    /// Earliest expiry among the hop opaque fields.
    pub fn expiry(&self) -> SimTime {
        self.hops
            .iter()
            .map(|h| h.of.expires_at(self.info.timestamp))
            .min()
            .unwrap_or(SimTime::ZERO)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn secrets(isd: u16, n: u32) -> AsSecrets {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64 * 31 + isd as u64);
        AsSecrets::generate(AsId::new(isd, n), &mut rng)
    }

    fn signer(s: &AsSecrets) -> Signer<'_> {
        Signer {
            secrets: s,
            trc_version: 1,
            cert_version: 1,
            expiry_units: 169,
        }
    }

    #[test]
    fn encode_round_trip_and_layout() {
        let c = secrets(1, 1);
        let e = secrets(1, 10);
        let pcb = Pcb::originate(PcbKind::Intra, IsdId::new(1).unwrap(), SimTime::from_secs(15), &signer(&c), 2, &[])
            .unwrap()
            .extend(&signer(&e), 1, 3, &[(AsId::new(1, 12), 4, 4)])
            .unwrap();
        let bytes = pcb.encode();
        assert_eq!(hex::encode(&bytes[..16]), "0000000f000100000001000100020000");
        // Record lengths: body 27 + peers * 18, plus 2 + 64 for the signature.
        assert_eq!(u16::from_be_bytes([bytes[16], bytes[17]]), 27 + 66);
        assert_eq!(bytes.len(), 16 + 2 + 93 + 2 + 93 + 18);
        assert_eq!(Pcb::decode(&bytes), Some(pcb));
    }

    #[test]
    fn loop_and_termination() {
        let c = secrets(1, 1);
        let e = secrets(1, 10);
        let pcb = Pcb::originate(PcbKind::Intra, IsdId::new(1).unwrap(), SimTime::ZERO, &signer(&c), 2, &[]).unwrap();
        assert_eq!(pcb.extend(&signer(&c), 1, 0, &[]), Err(PcbError::Loop(c.owner)));
        let term = pcb.extend(&signer(&e), 1, 0, &[]).unwrap();
        assert!(term.is_terminated());
        assert_eq!(term.extend(&signer(&secrets(1, 11)), 1, 0, &[]), Err(PcbError::Terminated));
        assert_eq!(term.expiry(), SimTime::from_secs(169 * 256));
    }

    #[test]
    fn peering_of_chains_to_hop_of() {
        use crate::dataplane::opaque::verify_of;
        let c = secrets(1, 1);
        let e = secrets(1, 10);
        let pcb = Pcb::originate(PcbKind::Intra, IsdId::new(1).unwrap(), SimTime::ZERO, &signer(&c), 2, &[])
            .unwrap()
            .extend(&signer(&e), 1, 3, &[(AsId::new(1, 12), 4, 4)])
            .unwrap();
        let hop = &pcb.hops[1];
        let now = SimTime::from_secs(1);
        assert_eq!(verify_of(&e.mac_secret, &hop.of, Some(&pcb.hops[0].of), now, 0, None), Ok(()));
        assert_eq!(verify_of(&e.mac_secret, &hop.peers[0].of, Some(&hop.of), now, 0, None), Ok(()));
        assert!(hop.peers[0].of.is_peering());
        assert_eq!((hop.peers[0].of.ingress, hop.peers[0].of.egress), (4, 3));
    }
}
