//! Signatures, symmetric MACs and DRKey derivation.
//!
//! Signatures are Ed25519 (deterministic, 64 bytes). The PRF behind hop-field
//! MACs and DRKeys is AES-128-CMAC.

use std::collections::BTreeMap;
use std::fmt;

use aes::Aes128;
use cmac::{Cmac, Mac};
use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::time::SimTime;
use crate::topology::AsId;

pub const SCHEME_ED25519: u8 = 1;
pub const SIGNATURE_LEN: usize = 64;

/// How long a fetched DRKey is served from cache before it is re-fetched.
pub const DRKEY_CACHE_LIFETIME: SimTime = SimTime::from_secs(3600);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CryptoError {
    #[error("malformed public key")]
    MalformedPublicKey,
    #[error("malformed private key")]
    MalformedPrivateKey,
    #[error("unsupported signature scheme {0}")]
    UnsupportedScheme(u8),
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature(pub [u8; SIGNATURE_LEN]);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", hex::encode(&self.0[..6]))
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct KeyPair {
    pub public: [u8; 32],
    pub private: [u8; 32],
    pub scheme_tag: u8,
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("public", &hex::encode(self.public))
            .field("scheme_tag", &self.scheme_tag)
            .finish_non_exhaustive()
    }
}

impl KeyPair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let signing = SigningKey::generate(rng);
        Self {
            public: signing.verifying_key().to_bytes(),
            private: signing.to_bytes(),
            scheme_tag: SCHEME_ED25519,
        }
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        sign(&self.private, message).expect("key pair holds a well-formed key")
    }
}

pub fn sign(private: &[u8], message: &[u8]) -> Result<Signature, CryptoError> {
    let bytes: [u8; 32] = private
        .try_into()
        .map_err(|_| CryptoError::MalformedPrivateKey)?;
    let key = SigningKey::from_bytes(&bytes);
    Ok(Signature(key.sign(message).to_bytes()))
}

/// True iff `signature` was produced over exactly `message` by the private
/// key matching `public`.
pub fn verify(public: &[u8], message: &[u8], signature: &Signature) -> Result<bool, CryptoError> {
    let bytes: [u8; 32] = public
        .try_into()
        .map_err(|_| CryptoError::MalformedPublicKey)?;
    let key = VerifyingKey::from_bytes(&bytes).map_err(|_| CryptoError::MalformedPublicKey)?;
    let sig = ed25519_dalek::Signature::from_bytes(&signature.0);
    Ok(key.verify(message, &sig).is_ok())
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymmetricKey(pub [u8; 16]);

impl fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SymmetricKey(..)")
    }
}

impl SymmetricKey {
    pub fn generate<R: RngCore>(rng: &mut R) -> Self {
        let mut k = [0u8; 16];
        rng.fill_bytes(&mut k);
        Self(k)
    }
}

/// AES-128-CMAC keyed PRF.
pub fn prf(key: &SymmetricKey, data: &[u8]) -> [u8; 16] {
    let mut mac =
        <Cmac<Aes128> as Mac>::new_from_slice(&key.0).expect("16-byte key is valid for AES-128");
    mac.update(data);
    mac.finalize().into_bytes().into()
}

/// 24-bit hop-field MAC: the PRF output truncated to its first three bytes.
pub fn mac24(key: &SymmetricKey, payload: &[u8]) -> u32 {
    assert!(payload.len() <= 32, "hop-field MAC input is at most 32 bytes");
    let out = prf(key, payload);
    u32::from_be_bytes([0, out[0], out[1], out[2]])
}

/// Key material owned by one AS. The symmetric secrets never leave the AS;
/// only DRKeys derived from `drkey_secret` are handed out.
#[derive(Clone)]
pub struct AsSecrets {
    pub owner: AsId,
    pub signing: KeyPair,
    pub mac_secret: SymmetricKey,
    pub drkey_secret: SymmetricKey,
}

impl fmt::Debug for AsSecrets {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AsSecrets")
            .field("owner", &self.owner)
            .field("signing", &self.signing)
            .finish_non_exhaustive()
    }
}

impl AsSecrets {
    pub fn generate<R: RngCore + CryptoRng>(owner: AsId, rng: &mut R) -> Self {
        Self {
            owner,
            signing: KeyPair::generate(rng),
            mac_secret: SymmetricKey::generate(rng),
            drkey_secret: SymmetricKey::generate(rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DrKey {
    pub from_as: AsId,
    pub to_as: AsId,
    pub key: SymmetricKey,
    pub fetched_at: SimTime,
}

/// Derive the key `from_as = secrets.owner` shares with `peer`.
pub fn derive_drkey(secrets: &AsSecrets, peer: AsId) -> DrKey {
    DrKey {
        from_as: secrets.owner,
        to_as: peer,
        key: SymmetricKey(prf(&secrets.drkey_secret, &peer.to_bytes())),
        fetched_at: SimTime::ZERO,
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DrKeyError {
    #[error("origin AS {0} unreachable")]
    Unreachable(AsId),
    #[error("DRKey exchange with {0} failed authentication")]
    BadExchange(AsId),
}

/// Signed request a verifier sends to the AS whose DRKey it needs.
#[derive(Debug, Clone)]
pub struct DrKeyRequest {
    pub requester: AsId,
    pub origin: AsId,
    pub timestamp: SimTime,
    pub signature: Signature,
}

/// Signed response carrying the derived key back to the requester.
#[derive(Debug, Clone)]
pub struct DrKeyResponse {
    pub origin: AsId,
    pub requester: AsId,
    pub key: SymmetricKey,
    pub timestamp: SimTime,
    pub signature: Signature,
}

fn request_body(requester: AsId, origin: AsId, ts: SimTime) -> Vec<u8> {
    let mut b = b"DRKEY-REQ".to_vec();
    b.extend_from_slice(&requester.to_bytes());
    b.extend_from_slice(&origin.to_bytes());
    b.extend_from_slice(&ts.as_micros().to_be_bytes());
    b
}

fn response_body(origin: AsId, requester: AsId, key: &SymmetricKey, ts: SimTime) -> Vec<u8> {
    let mut b = b"DRKEY-RSP".to_vec();
    b.extend_from_slice(&origin.to_bytes());
    b.extend_from_slice(&requester.to_bytes());
    b.extend_from_slice(&key.0);
    b.extend_from_slice(&ts.as_micros().to_be_bytes());
    b
}

impl DrKeyRequest {
    pub fn new(requester: &AsSecrets, origin: AsId, now: SimTime) -> Self {
        let body = request_body(requester.owner, origin, now);
        Self {
            requester: requester.owner,
            origin,
            timestamp: now,
            signature: requester.signing.sign(&body),
        }
    }

    /// Origin side: authenticate the request and answer with the derived key.
    pub fn respond(
        &self,
        origin: &AsSecrets,
        requester_public: &[u8],
    ) -> Result<DrKeyResponse, DrKeyError> {
        let body = request_body(self.requester, self.origin, self.timestamp);
        if self.origin != origin.owner
            || !verify(requester_public, &body, &self.signature).unwrap_or(false)
        {
            return Err(DrKeyError::BadExchange(origin.owner));
        }
        let key = derive_drkey(origin, self.requester).key;
        let rsp = response_body(origin.owner, self.requester, &key, self.timestamp);
        Ok(DrKeyResponse {
            origin: origin.owner,
            requester: self.requester,
            key,
            timestamp: self.timestamp,
            signature: origin.signing.sign(&rsp),
        })
    }
}

impl DrKeyResponse {
    /// Requester side: check the origin's signature and turn the response
    /// into a cacheable key.
    pub fn accept(&self, origin_public: &[u8], now: SimTime) -> Result<DrKey, DrKeyError> {
        let body = response_body(self.origin, self.requester, &self.key, self.timestamp);
        if !verify(origin_public, &body, &self.signature).unwrap_or(false) {
            return Err(DrKeyError::BadExchange(self.origin));
        }
        Ok(DrKey {
            from_as: self.origin,
            to_as: self.requester,
            key: self.key,
            fetched_at: now,
        })
    }
}

/// Per-AS cache of DRKeys fetched from other ASes.
#[derive(Debug, Clone, Default)]
pub struct DrKeyCache {
    entries: BTreeMap<AsId, DrKey>,
    exchanges: u64,
}

impl DrKeyCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of request/response exchanges performed so far.
    pub fn exchanges(&self) -> u64 {
        self.exchanges
    }

    pub fn cached(&self, origin: AsId) -> Option<&DrKey> {
        self.entries.get(&origin)
    }

    /// Return the key `origin` shares with this AS, serving it from cache
    /// while younger than [`DRKEY_CACHE_LIFETIME`]. Otherwise `exchange`
    /// performs one signed round trip; on failure the cache is left as is.
    pub fn fetch(
        &mut self,
        origin: AsId,
        now: SimTime,
        exchange: impl FnOnce(AsId) -> Result<DrKey, DrKeyError>,
    ) -> Result<DrKey, DrKeyError> {
        if let Some(k) = self.entries.get(&origin) {
            if now.saturating_sub(k.fetched_at) < DRKEY_CACHE_LIFETIME {
                return Ok(*k);
            }
        }
        self.exchanges += 1;
        let key = exchange(origin)?;
        self.entries.insert(origin, key);
        Ok(key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn signature_roundtrip_and_tamper() {
        let mut r = rng();
        let kp = KeyPair::generate(&mut r);
        let other = KeyPair::generate(&mut r);
        let msg = b"path construction beacon";
        let sig = kp.sign(msg);
        assert!(verify(&kp.public, msg, &sig).unwrap());
        let mut flipped = msg.to_vec();
        flipped[3] ^= 1;
        assert!(!verify(&kp.public, &flipped, &sig).unwrap());
        assert!(!verify(&other.public, msg, &sig).unwrap());
        assert_eq!(verify(&[1, 2, 3], msg, &sig), Err(CryptoError::MalformedPublicKey));
    }

    #[test]
    fn mac_is_deterministic_and_24_bits() {
        let mut r = rng();
        let k = SymmetricKey::generate(&mut r);
        let a = mac24(&k, b"payload");
        assert_eq!(a, mac24(&k, b"payload"));
        assert!(a < (1 << 24));
    }

    // Two independent uniform 24-bit tags collide with probability 2^-24, so
    // over 1000 trials the expected number of collisions is about 6e-5.
    #[test]
    fn mac_key_and_expiry_sensitivity() {
        let mut r = rng();
        let payload = [0x00, 0xA9, 0x00, 0x10, 0x02, 0, 0, 0, 0, 0, 0, 0, 0];
        let mut key_collisions = 0;
        let mut expiry_collisions = 0;
        for _ in 0..1000 {
            let k1 = SymmetricKey::generate(&mut r);
            let k2 = SymmetricKey::generate(&mut r);
            if mac24(&k1, &payload) == mac24(&k2, &payload) {
                key_collisions += 1;
            }
            let mut p2 = payload;
            p2[1] = p2[1].wrapping_add(1);
            if mac24(&k1, &payload) == mac24(&k1, &p2) {
                expiry_collisions += 1;
            }
        }
        assert!(key_collisions <= 1);
        assert!(expiry_collisions <= 1);
    }

    #[test]
    fn drkey_derivation() {
        let mut r = rng();
        let s = AsSecrets::generate(AsId::new(1, 1), &mut r);
        let p = AsId::new(1, 2);
        let q = AsId::new(1, 3);
        assert_eq!(derive_drkey(&s, p), derive_drkey(&s, p));
        assert_ne!(derive_drkey(&s, p).key, derive_drkey(&s, q).key);
    }

    #[test]
    fn drkey_peer_distinctness_trials() {
        let mut r = rng();
        let mut same = 0;
        for i in 0..1000u32 {
            let s = AsSecrets::generate(AsId::new(1, i), &mut r);
            if derive_drkey(&s, AsId::new(2, i)).key == derive_drkey(&s, AsId::new(2, i + 1)).key {
                same += 1;
            }
        }
        assert_eq!(same, 0);
    }

    fn exchange_with<'a>(
        origin: &'a AsSecrets,
        requester: &AsSecrets,
        now: SimTime,
    ) -> impl FnOnce(AsId) -> Result<DrKey, DrKeyError> + 'a {
        let req = DrKeyRequest::new(requester, origin.owner, now);
        let req_pub = requester.signing.public;
        move |_| {
            let rsp = req.respond(origin, &req_pub)?;
            rsp.accept(&origin.signing.public, now)
        }
    }

    #[test]
    fn fetch_caches_for_an_hour() {
        let mut r = rng();
        let origin = AsSecrets::generate(AsId::new(1, 1), &mut r);
        let me = AsSecrets::generate(AsId::new(1, 2), &mut r);
        let mut cache = DrKeyCache::new();

        let t0 = SimTime::from_secs(100);
        let k = cache.fetch(origin.owner, t0, exchange_with(&origin, &me, t0)).unwrap();
        // Symmetry of knowledge: the fetched key equals the origin's derivation.
        assert_eq!(k.key, derive_drkey(&origin, me.owner).key);

        let t1 = SimTime::from_secs(110);
        cache.fetch(origin.owner, t1, exchange_with(&origin, &me, t1)).unwrap();
        assert_eq!(cache.exchanges(), 1);

        let t2 = SimTime::from_secs(4100);
        cache.fetch(origin.owner, t2, exchange_with(&origin, &me, t2)).unwrap();
        assert_eq!(cache.exchanges(), 2);
    }

    #[test]
    fn failed_fetch_leaves_cache_unchanged() {
        let mut cache = DrKeyCache::new();
        let origin = AsId::new(1, 9);
        let err = cache
            .fetch(origin, SimTime::ZERO, |o| Err(DrKeyError::Unreachable(o)))
            .unwrap_err();
        assert_eq!(err, DrKeyError::Unreachable(origin));
        assert!(cache.cached(origin).is_none());
    }

    #[test]
    fn forged_drkey_request_rejected() {
        let mut r = rng();
        let origin = AsSecrets::generate(AsId::new(1, 1), &mut r);
        let me = AsSecrets::generate(AsId::new(1, 2), &mut r);
        let mallory = AsSecrets::generate(AsId::new(1, 3), &mut r);
        // Mallory signs a request claiming to be `me`.
        let mut req = DrKeyRequest::new(&mallory, origin.owner, SimTime::ZERO);
        req.requester = me.owner;
        assert!(req.respond(&origin, &me.signing.public).is_err());
    }
}
