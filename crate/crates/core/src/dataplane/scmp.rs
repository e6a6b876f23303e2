//! Control messages authenticated with DRKeys.

use thiserror::Error;

use crate::crypto::{derive_drkey, prf, AsSecrets, DrKey, DrKeyCache, DrKeyError};
use crate::time::SimTime;
use crate::topology::{AsId, InterfaceId};

pub const SCMP_TAG_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScmpType {
    RevokeInterface,
    Echo,
    Unreachable,
}

impl ScmpType {
    fn code(self) -> u8 {
        match self {
            ScmpType::RevokeInterface => 1,
            ScmpType::Echo => 2,
            ScmpType::Unreachable => 3,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            1 => Some(ScmpType::RevokeInterface),
            2 => Some(ScmpType::Echo),
            3 => Some(ScmpType::Unreachable),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScmpMessage {
    pub kind: ScmpType,
    pub issuer: AsId,
    pub subject: Option<(AsId, InterfaceId)>,
    pub timestamp: SimTime,
    /// Tag under DRKey(issuer -> verifier); each verifier gets its own copy.
    pub tag: [u8; SCMP_TAG_LEN],
}

pub const SCMP_LEN: usize = 1 + 6 + 6 + 2 + 8 + SCMP_TAG_LEN;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScmpReject {
    #[error("bad tag")]
    BadTag,
    #[error("issuer key unavailable: {0}")]
    Unverifiable(DrKeyError),
}

impl ScmpMessage {
    fn body(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(SCMP_LEN - SCMP_TAG_LEN);
        out.push(self.kind.code());
        out.extend_from_slice(&self.issuer.to_bytes());
        match self.subject {
            Some((a, i)) => {
                out.extend_from_slice(&a.to_bytes());
                out.extend_from_slice(&i.value().to_be_bytes());
            }
            None => out.extend_from_slice(&[0; 8]),
        }
        out.extend_from_slice(&self.timestamp.as_micros().to_be_bytes());
        out
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.body();
        out.extend_from_slice(&self.tag);
        out
    }

    pub fn decode(b: &[u8]) -> Option<Self> {
        if b.len() != SCMP_LEN {
            return None;
        }
        let kind = ScmpType::from_code(b[0])?;
        let issuer = AsId::from_bytes(b[1..7].try_into().ok()?)?;
        let subject = if b[7..15].iter().all(|&x| x == 0) {
            None
        } else {
            let a = AsId::from_bytes(b[7..13].try_into().ok()?)?;
            let i = InterfaceId::new(u16::from_be_bytes([b[13], b[14]]))?;
            Some((a, i))
        };
        let timestamp = SimTime::from_micros(u64::from_be_bytes(b[15..23].try_into().ok()?));
        Some(ScmpMessage {
            kind,
            issuer,
            subject,
            timestamp,
            tag: b[23..].try_into().ok()?,
        })
    }

    pub fn revoke(issuer: AsId, interface: InterfaceId, timestamp: SimTime) -> Self {
        ScmpMessage {
            kind: ScmpType::RevokeInterface,
            issuer,
            subject: Some((issuer, interface)),
            timestamp,
            tag: [0; SCMP_TAG_LEN],
        }
    }

    pub fn tag_with(&self, key: &DrKey) -> [u8; SCMP_TAG_LEN] {
        prf(&key.key, &self.body())
    }
}

/// Authenticate `msg` for `verifier` with the issuer's DRKey secret.
pub fn scmp_auth(issuer: &AsSecrets, mut msg: ScmpMessage, verifier: AsId) -> ScmpMessage {
    msg.issuer = issuer.owner;
    msg.tag = msg.tag_with(&derive_drkey(issuer, verifier));
    msg
}

/// Verify at `verifier`, fetching the issuer's DRKey through `cache` when it
/// is absent or stale.
pub fn scmp_verify(
    verifier: AsId,
    msg: &ScmpMessage,
    cache: &mut DrKeyCache,
    now: SimTime,
    exchange: impl FnOnce(AsId) -> Result<DrKey, DrKeyError>,
) -> Result<(), ScmpReject> {
    let key = cache
        .fetch(msg.issuer, now, exchange)
        .map_err(ScmpReject::Unverifiable)?;
    if key.to_as != verifier {
        return Err(ScmpReject::BadTag);
    }
    if msg.tag_with(&key) != msg.tag {
        return Err(ScmpReject::BadTag);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (AsSecrets, AsSecrets) {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        (
            AsSecrets::generate(AsId::new(1, 10), &mut rng),
            AsSecrets::generate(AsId::new(1, 1), &mut rng),
        )
    }

    fn honest(issuer: &AsSecrets, verifier: AsId) -> impl FnOnce(AsId) -> Result<DrKey, DrKeyError> + '_ {
        move |_| Ok(derive_drkey(issuer, verifier))
    }

    #[test]
    fn honest_revoke_accepted_and_round_trips() {
        let (issuer, ps) = setup();
        let msg = ScmpMessage::revoke(issuer.owner, InterfaceId::new(3).unwrap(), SimTime::from_secs(5));
        let msg = scmp_auth(&issuer, msg, ps.owner);
        assert_eq!(ScmpMessage::decode(&msg.encode()), Some(msg));
        let mut cache = DrKeyCache::new();
        assert_eq!(
            scmp_verify(ps.owner, &msg, &mut cache, SimTime::from_secs(5), honest(&issuer, ps.owner)),
            Ok(())
        );
    }

    #[test]
    fn flipped_tag_bits_rejected() {
        let (issuer, ps) = setup();
        let msg = scmp_auth(
            &issuer,
            ScmpMessage::revoke(issuer.owner, InterfaceId::new(3).unwrap(), SimTime::ZERO),
            ps.owner,
        );
        let mut cache = DrKeyCache::new();
        for bit in 0..128 {
            let mut m = msg;
            m.tag[bit / 8] ^= 1 << (bit % 8);
            assert_eq!(
                scmp_verify(ps.owner, &m, &mut cache, SimTime::ZERO, honest(&issuer, ps.owner)),
                Err(ScmpReject::BadTag)
            );
        }
        assert_eq!(cache.exchanges(), 1);
    }

    #[test]
    fn forged_with_random_key_rejected() {
        let (issuer, ps) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut fake = AsSecrets::generate(issuer.owner, &mut rng);
        fake.owner = issuer.owner;
        let forged = scmp_auth(
            &fake,
            ScmpMessage::revoke(issuer.owner, InterfaceId::new(3).unwrap(), SimTime::ZERO),
            ps.owner,
        );
        let mut cache = DrKeyCache::new();
        assert_eq!(
            scmp_verify(ps.owner, &forged, &mut cache, SimTime::ZERO, honest(&issuer, ps.owner)),
            Err(ScmpReject::BadTag)
        );
    }

    #[test]
    fn unreachable_issuer_is_unverifiable() {
        let (issuer, ps) = setup();
        let msg = scmp_auth(
            &issuer,
            ScmpMessage::revoke(issuer.owner, InterfaceId::new(3).unwrap(), SimTime::ZERO),
            ps.owner,
        );
        let mut cache = DrKeyCache::new();
        assert_eq!(
            scmp_verify(ps.owner, &msg, &mut cache, SimTime::ZERO, |a| Err(DrKeyError::Unreachable(a))),
            Err(ScmpReject::Unverifiable(DrKeyError::Unreachable(issuer.owner)))
        );
    }
}
