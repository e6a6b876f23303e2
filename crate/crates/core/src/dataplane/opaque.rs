//! Opaque fields: the 8-byte per-AS hop records carried in packet headers.
//!
//! Wire layout, most significant bit first:
//!
//! ```text
//! | flags 8 | expiry 8 | ingress 12 | egress 12 | mac 24 |
//! ```
//!
//! Interface id 0 means "none" (segment end). The MAC covers the flags, the
//! expiry, both interfaces, the InfoField timestamp and the previous opaque
//! field in construction order, so a field cannot be lifted into another
//! segment or have its lifetime extended.

use thiserror::Error;

use crate::crypto::{mac24, SymmetricKey};
use crate::time::SimTime;

pub const OF_LEN: usize = 8;

/// Set on the extra field an AS issues for one of its peering links.
pub const FLAG_PEERING: u8 = 0x01;
/// Set by path combination on fields that are carried only as MAC input for
/// the next field and are never used to forward. Not covered by the MAC.
pub const FLAG_VERIFY_ONLY: u8 = 0x02;
const FLAGS_KNOWN: u8 = FLAG_PEERING | FLAG_VERIFY_ONLY;

pub const EXPIRY_UNIT_SECS: u64 = 256;
/// 169 * 256 s = 43264 s, about 12 hours.
pub const DEFAULT_EXPIRY_UNITS: u8 = 169;
pub const MAX_INTERFACE: u16 = 0x0fff;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OpaqueField {
    pub flags: u8,
    pub expiry: u8,
    pub ingress: u16,
    pub egress: u16,
    pub mac: u32,
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum OfError {
    #[error("interface id {0} does not fit in 12 bits")]
    InterfaceRange(u16),
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OfReject {
    #[error("mac")]
    Mac,
    #[error("expired")]
    Expired,
    #[error("wrong-interface")]
    WrongInterface,
    #[error("flags")]
    Flags,
}

impl OfReject {
    pub fn as_str(self) -> &'static str {
        match self {
            OfReject::Mac => "mac",
            OfReject::Expired => "expired",
            OfReject::WrongInterface => "wrong-interface",
            OfReject::Flags => "flags",
        }
    }
}

impl OpaqueField {
    pub fn to_bytes(self) -> [u8; OF_LEN] {
        let ifs = ((self.ingress as u32) << 12) | self.egress as u32;
        let [_, i0, i1, i2] = ifs.to_be_bytes();
        let [_, m0, m1, m2] = self.mac.to_be_bytes();
        [self.flags, self.expiry, i0, i1, i2, m0, m1, m2]
    }

    pub fn from_bytes(b: [u8; OF_LEN]) -> Self {
        let ifs = u32::from_be_bytes([0, b[2], b[3], b[4]]);
        OpaqueField {
            flags: b[0],
            expiry: b[1],
            ingress: (ifs >> 12) as u16,
            egress: (ifs & 0xfff) as u16,
            mac: u32::from_be_bytes([0, b[5], b[6], b[7]]),
        }
    }

    pub fn is_peering(self) -> bool {
        self.flags & FLAG_PEERING != 0
    }

    pub fn is_verify_only(self) -> bool {
        self.flags & FLAG_VERIFY_ONLY != 0
    }

    pub fn with_verify_only(mut self, on: bool) -> Self {
        if on {
            self.flags |= FLAG_VERIFY_ONLY;
        } else {
            self.flags &= !FLAG_VERIFY_ONLY;
        }
        self
    }

    /// Absolute expiry given the owning segment's timestamp in seconds.
    pub fn expires_at(self, timestamp: u32) -> SimTime {
        SimTime::from_secs(timestamp as u64 + self.expiry as u64 * EXPIRY_UNIT_SECS)
    }
}

fn mac_input(flags: u8, expiry: u8, ingress: u16, egress: u16, timestamp: u32, prior: Option<&OpaqueField>) -> [u8; 17] {
    let mut buf = [0u8; 17];
    buf[0] = flags & !FLAG_VERIFY_ONLY;
    buf[1] = expiry;
    let ifs = ((ingress as u32) << 12) | egress as u32;
    buf[2..5].copy_from_slice(&ifs.to_be_bytes()[1..]);
    buf[5..9].copy_from_slice(&timestamp.to_be_bytes());
    if let Some(p) = prior {
        buf[9..17].copy_from_slice(&p.with_verify_only(false).to_bytes());
    }
    buf
}

/// Issue an opaque field chained to `prior` (the preceding non-peering field
/// in construction order; `None` for the first hop of a segment).
pub fn build_of(
    key: &SymmetricKey,
    flags: u8,
    expiry: u8,
    ingress: u16,
    egress: u16,
    timestamp: u32,
    prior: Option<&OpaqueField>,
) -> Result<OpaqueField, OfError> {
    for i in [ingress, egress] {
        if i > MAX_INTERFACE {
            return Err(OfError::InterfaceRange(i));
        }
    }
    let flags = flags & !FLAG_VERIFY_ONLY;
    Ok(OpaqueField {
        flags,
        expiry,
        ingress,
        egress,
        mac: mac24(key, &mac_input(flags, expiry, ingress, egress, timestamp, prior)),
    })
}

/// Interface check performed by a border router: the packet must arrive on
/// the ingress interface when moving in construction direction and on the
/// egress interface otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrivalCheck {
    pub arrival: u16,
    pub cons_dir: bool,
}

/// Check an opaque field for use in forwarding. Verify-only fields and
/// unknown flag bits are rejected outright.
pub fn verify_of(
    key: &SymmetricKey,
    of: &OpaqueField,
    prior: Option<&OpaqueField>,
    now: SimTime,
    timestamp: u32,
    arrival: Option<ArrivalCheck>,
) -> Result<(), OfReject> {
    if of.flags & !FLAGS_KNOWN != 0 || of.is_verify_only() {
        return Err(OfReject::Flags);
    }
    let expected = mac24(
        key,
        &mac_input(of.flags, of.expiry, of.ingress, of.egress, timestamp, prior),
    );
    if expected != of.mac {
        return Err(OfReject::Mac);
    }
    if now >= of.expires_at(timestamp) {
        return Err(OfReject::Expired);
    }
    if let Some(check) = arrival {
        let want = if check.cons_dir { of.ingress } else { of.egress };
        if check.arrival != want {
            return Err(OfReject::WrongInterface);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key() -> SymmetricKey {
        SymmetricKey([7; 16])
    }

    #[test]
    fn layout_round_trip() {
        let of = OpaqueField {
            flags: 1,
            expiry: 169,
            ingress: 0xabc,
            egress: 0x123,
            mac: 0x00fe_dcba,
        };
        let b = of.to_bytes();
        assert_eq!(b, [0x01, 0xa9, 0xab, 0xc1, 0x23, 0xfe, 0xdc, 0xba]);
        assert_eq!(OpaqueField::from_bytes(b), of);
    }

    #[test]
    fn default_expiry_is_about_twelve_hours() {
        assert_eq!(DEFAULT_EXPIRY_UNITS as u64 * EXPIRY_UNIT_SECS, 43_264);
        let hours = 43_264.0 / 3600.0;
        assert!((hours - 12.0f64).abs() < 0.05);
    }

    #[test]
    fn build_then_verify() {
        let of = build_of(&key(), 0, DEFAULT_EXPIRY_UNITS, 3, 9, 100, None).unwrap();
        let now = SimTime::from_secs(200);
        assert_eq!(verify_of(&key(), &of, None, now, 100, None), Ok(()));
        let check = ArrivalCheck { arrival: 3, cons_dir: true };
        assert_eq!(verify_of(&key(), &of, None, now, 100, Some(check)), Ok(()));
        let check = ArrivalCheck { arrival: 9, cons_dir: false };
        assert_eq!(verify_of(&key(), &of, None, now, 100, Some(check)), Ok(()));
    }

    #[test]
    fn wrong_interface_and_expiry() {
        let of = build_of(&key(), 0, 2, 9, 4, 100, None).unwrap();
        let check = ArrivalCheck { arrival: 7, cons_dir: true };
        assert_eq!(
            verify_of(&key(), &of, None, SimTime::from_secs(101), 100, Some(check)),
            Err(OfReject::WrongInterface)
        );
        // Valid through 100 + 512 s exclusive.
        assert_eq!(verify_of(&key(), &of, None, SimTime::from_secs(611), 100, None), Ok(()));
        assert_eq!(
            verify_of(&key(), &of, None, SimTime::from_secs(612), 100, None),
            Err(OfReject::Expired)
        );
    }

    #[test]
    fn chaining_changes_mac() {
        let p1 = build_of(&key(), 0, 10, 0, 1, 5, None).unwrap();
        let p2 = build_of(&key(), 0, 10, 0, 2, 5, None).unwrap();
        let a = build_of(&key(), 0, 10, 1, 2, 5, Some(&p1)).unwrap();
        let b = build_of(&key(), 0, 10, 1, 2, 5, Some(&p2)).unwrap();
        assert_ne!(a.mac, b.mac);
        let now = SimTime::from_secs(6);
        assert_eq!(verify_of(&key(), &a, Some(&p2), now, 5, None), Err(OfReject::Mac));
        // The verify-only marker on the prior does not affect the chain.
        assert_eq!(verify_of(&key(), &a, Some(&p1.with_verify_only(true)), now, 5, None), Ok(()));
        // Timestamp is bound too.
        assert_eq!(verify_of(&key(), &a, Some(&p1), now, 4, None), Err(OfReject::Mac));
    }

    #[test]
    fn every_single_bit_flip_rejects() {
        let prior = build_of(&key(), 0, 169, 0, 5, 1000, None).unwrap();
        let of = build_of(&key(), 0, 169, 5, 6, 1000, Some(&prior)).unwrap();
        let now = SimTime::from_secs(1001);
        let check = Some(ArrivalCheck { arrival: 5, cons_dir: true });
        assert_eq!(verify_of(&key(), &of, Some(&prior), now, 1000, check), Ok(()));
        let bytes = of.to_bytes();
        for bit in 0..64 {
            let mut b = bytes;
            b[bit / 8] ^= 0x80 >> (bit % 8);
            let flipped = OpaqueField::from_bytes(b);
            assert!(verify_of(&key(), &flipped, Some(&prior), now, 1000, check).is_err(), "bit {bit}");
        }
    }

    #[test]
    fn interface_range() {
        assert_eq!(
            build_of(&key(), 0, 1, 4096, 1, 0, None),
            Err(OfError::InterfaceRange(4096))
        );
    }
}
