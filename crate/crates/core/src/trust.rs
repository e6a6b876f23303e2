//! Trust root configurations (TRCs), AS certificates and cross-signing.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::crypto::{verify, KeyPair, Signature};
use crate::time::SimTime;
use crate::topology::{AsId, IsdId, Topology};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrustRoot {
    /// Free-form role label; scenarios decide what each root is used for.
    pub role: String,
    pub public: [u8; 32],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RootSignature {
    pub root_index: u8,
    pub signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trc {
    pub isd: IsdId,
    pub version: u32,
    pub trust_roots: Vec<TrustRoot>,
    /// Root signatures required on an AS certificate.
    pub quorum_cert: u32,
    /// Signatures by the previous version's roots required to accept an update.
    pub quorum_trc: u32,
    pub signatures: Vec<RootSignature>,
    pub cross_signatures: BTreeMap<IsdId, RootSignature>,
}

fn push_field(out: &mut Vec<u8>, field: &[u8]) {
    out.extend_from_slice(&(field.len() as u32).to_be_bytes());
    out.extend_from_slice(field);
}

impl Trc {
    pub fn new(
        isd: IsdId,
        version: u32,
        trust_roots: Vec<TrustRoot>,
        quorum_cert: u32,
        quorum_trc: u32,
    ) -> Self {
        Self {
            isd,
            version,
            trust_roots,
            quorum_cert,
            quorum_trc,
            signatures: Vec::new(),
            cross_signatures: BTreeMap::new(),
        }
    }

    /// Canonical body covered by all TRC signatures: every field except the
    /// two signature lists, each length-prefixed, in declaration order.
    pub fn canonical_body(&self) -> Vec<u8> {
        let mut out = Vec::new();
        push_field(&mut out, &self.isd.value().to_be_bytes());
        push_field(&mut out, &self.version.to_be_bytes());
        let mut roots = Vec::new();
        roots.extend_from_slice(&(self.trust_roots.len() as u16).to_be_bytes());
        for root in &self.trust_roots {
            push_field(&mut roots, root.role.as_bytes());
            push_field(&mut roots, &root.public);
        }
        push_field(&mut out, &roots);
        push_field(&mut out, &self.quorum_cert.to_be_bytes());
        push_field(&mut out, &self.quorum_trc.to_be_bytes());
        out
    }

    /// Append a signature by the holder of `key`, acting as root `root_index`
    /// of the signing TRC (the previous version for updates).
    pub fn add_signature(&mut self, root_index: u8, key: &KeyPair) {
        let signature = key.sign(&self.canonical_body());
        self.signatures.push(RootSignature {
            root_index,
            signature,
        });
    }

    /// Number of distinct roots of `signer` whose signatures over this TRC verify.
    pub fn valid_signatures_by(&self, signer: &Trc) -> usize {
        count_valid(&self.canonical_body(), &self.signatures, signer)
    }

    pub fn has_valid_cross_signature(&self, signer: &Trc) -> bool {
        self.cross_signatures.get(&signer.isd).is_some_and(|s| {
            count_valid(&self.canonical_body(), std::slice::from_ref(s), signer) == 1
        })
    }
}

fn count_valid(body: &[u8], sigs: &[RootSignature], signer: &Trc) -> usize {
    let mut seen = BTreeSet::new();
    for s in sigs {
        let Some(root) = signer.trust_roots.get(s.root_index as usize) else {
            continue;
        };
        if verify(&root.public, body, &s.signature).unwrap_or(false) {
            seen.insert(s.root_index);
        }
    }
    seen.len()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrcRejection {
    #[error("missing intermediate TRC version")]
    MissingIntermediate,
    #[error("quorum not met: {got} of {needed} signatures")]
    Quorum { got: usize, needed: u32 },
    #[error("stale TRC version {0}")]
    Stale(u32),
    #[error("malformed TRC: {0}")]
    Malformed(&'static str),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrustError {
    #[error("ISD {0} cannot cross-sign its own TRC")]
    SelfCrossSign(IsdId),
    #[error("ISDs {0} and {1} share no link")]
    NotAdjacent(IsdId, IsdId),
    #[error("no cross-signature chain from ISD {from} to ISD {to}")]
    NoChain { from: IsdId, to: IsdId },
    #[error("unknown TRC for ISD {0} version {1}")]
    UnknownTrc(IsdId, u32),
}

/// Per-ISD history of accepted TRC versions.
#[derive(Debug, Clone, Default)]
pub struct TrcStore {
    by_isd: BTreeMap<IsdId, BTreeMap<u32, Trc>>,
}

impl TrcStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Install an axiomatically trusted TRC (scenario bootstrap).
    pub fn bootstrap(&mut self, trc: Trc) {
        self.by_isd
            .entry(trc.isd)
            .or_default()
            .insert(trc.version, trc);
    }

    pub fn current(&self, isd: IsdId) -> Option<&Trc> {
        self.by_isd.get(&isd)?.values().next_back()
    }

    pub fn current_version(&self, isd: IsdId) -> u32 {
        self.current(isd).map_or(0, |t| t.version)
    }

    pub fn get(&self, isd: IsdId, version: u32) -> Option<&Trc> {
        self.by_isd.get(&isd)?.get(&version)
    }

    pub fn isds(&self) -> impl Iterator<Item = IsdId> + '_ {
        self.by_isd.keys().copied()
    }

    /// Accept `new` iff it directly succeeds the current version and carries
    /// at least `quorum_trc` valid signatures from the current roots.
    pub fn update(&mut self, new: Trc) -> Result<(), TrcRejection> {
        if new.version == 0 || new.quorum_cert == 0 || new.quorum_trc == 0 {
            return Err(TrcRejection::Malformed("zero version or quorum"));
        }
        let current = self.current_version(new.isd);
        if new.version <= current {
            return match self.get(new.isd, new.version) {
                Some(existing) if *existing == new => Ok(()),
                _ => Err(TrcRejection::Stale(new.version)),
            };
        }
        if current == 0 {
            return if new.version == 1 {
                self.bootstrap(new);
                Ok(())
            } else {
                Err(TrcRejection::MissingIntermediate)
            };
        }
        if new.version != current + 1 {
            return Err(TrcRejection::MissingIntermediate);
        }
        let prev = self.current(new.isd).expect("current exists");
        let got = new.valid_signatures_by(prev);
        if got < prev.quorum_trc as usize {
            return Err(TrcRejection::Quorum {
                got,
                needed: prev.quorum_trc,
            });
        }
        self.bootstrap(new);
        Ok(())
    }
}

/// Sign `trc` with one root of an adjacent ISD so that holders of that ISD's
/// TRC can verify it.
pub fn cross_sign(
    trc: &Trc,
    signer: &Trc,
    root_index: u8,
    root_key: &KeyPair,
    topo: &Topology,
) -> Result<Trc, TrustError> {
    if trc.isd == signer.isd {
        return Err(TrustError::SelfCrossSign(trc.isd));
    }
    let adjacent = topo
        .isd_adjacency()
        .get(&trc.isd)
        .is_some_and(|n| n.contains(&signer.isd));
    if !adjacent {
        return Err(TrustError::NotAdjacent(trc.isd, signer.isd));
    }
    let mut out = trc.clone();
    out.cross_signatures.insert(
        signer.isd,
        RootSignature {
            root_index,
            signature: root_key.sign(&trc.canonical_body()),
        },
    );
    Ok(out)
}

/// Verify `trcs[target]` starting from the trusted TRC of `anchor`, following
/// cross-signatures along ISD adjacencies. Returns the ISD chain used: the
/// shortest one, ties broken by ascending ISD number.
pub fn verify_cross_chain(
    target: IsdId,
    anchor: IsdId,
    trcs: &BTreeMap<IsdId, Trc>,
    topo: &Topology,
) -> Result<Vec<IsdId>, TrustError> {
    if !trcs.contains_key(&anchor) {
        return Err(TrustError::UnknownTrc(anchor, 0));
    }
    let adjacency = topo.isd_adjacency();
    let mut parent: BTreeMap<IsdId, IsdId> = BTreeMap::new();
    let mut seen = BTreeSet::from([anchor]);
    let mut queue = VecDeque::from([anchor]);
    while let Some(cur) = queue.pop_front() {
        if cur == target {
            let mut chain = vec![cur];
            let mut at = cur;
            while let Some(&p) = parent.get(&at) {
                chain.push(p);
                at = p;
            }
            chain.reverse();
            return Ok(chain);
        }
        let signer = &trcs[&cur];
        for &next in adjacency.get(&cur).into_iter().flatten() {
            if seen.contains(&next) {
                continue;
            }
            let Some(next_trc) = trcs.get(&next) else {
                continue;
            };
            if next_trc.has_valid_cross_signature(signer) {
                seen.insert(next);
                parent.insert(next, cur);
                queue.push_back(next);
            }
        }
    }
    Err(TrustError::NoChain {
        from: anchor,
        to: target,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsCert {
    pub subject: AsId,
    pub public: [u8; 32],
    pub valid_from: SimTime,
    pub valid_until: SimTime,
    pub trc_version: u32,
    pub version: u32,
    pub issuer_signatures: Vec<RootSignature>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CertError {
    #[error("unknown TRC version {1} for ISD {0}")]
    UnknownTrc(IsdId, u32),
}

impl AsCert {
    pub fn canonical_body(&self) -> Vec<u8> {
        let mut out = b"AS-CERT".to_vec();
        out.extend_from_slice(&self.subject.to_bytes());
        out.extend_from_slice(&self.public);
        out.extend_from_slice(&self.valid_from.as_micros().to_be_bytes());
        out.extend_from_slice(&self.valid_until.as_micros().to_be_bytes());
        out.extend_from_slice(&self.trc_version.to_be_bytes());
        out.extend_from_slice(&self.version.to_be_bytes());
        out
    }

    /// Issue a certificate signed by the given roots of `trc`.
    pub fn issue(
        subject: AsId,
        public: [u8; 32],
        validity: (SimTime, SimTime),
        trc: &Trc,
        signers: &[(u8, &KeyPair)],
    ) -> Self {
        let mut cert = AsCert {
            subject,
            public,
            valid_from: validity.0,
            valid_until: validity.1,
            trc_version: trc.version,
            version: 1,
            issuer_signatures: Vec::new(),
        };
        let body = cert.canonical_body();
        cert.issuer_signatures = signers
            .iter()
            .map(|&(root_index, key)| RootSignature {
                root_index,
                signature: key.sign(&body),
            })
            .collect();
        cert
    }
}

/// True iff the certificate carries at least `quorum_cert` valid root
/// signatures of the TRC version it references, its subject belongs to that
/// ISD, and `now` lies inside its validity window.
pub fn validate_cert_chain(cert: &AsCert, store: &TrcStore, now: SimTime) -> Result<bool, CertError> {
    let isd = cert.subject.isd;
    let trc = store
        .get(isd, cert.trc_version)
        .ok_or(CertError::UnknownTrc(isd, cert.trc_version))?;
    if trc.isd != isd || now < cert.valid_from || now >= cert.valid_until {
        return Ok(false);
    }
    let valid = count_valid(&cert.canonical_body(), &cert.issuer_signatures, trc);
    Ok(valid >= trc.quorum_cert as usize)
}

/// Like [`validate_cert_chain`], but an unknown TRC version triggers fetching
/// the missing versions through `fetch`, installing them with
/// [`TrcStore::update`], and one retry.
pub fn validate_cert_with_fetch(
    cert: &AsCert,
    store: &mut TrcStore,
    now: SimTime,
    mut fetch: impl FnMut(IsdId, u32) -> Option<Trc>,
) -> Result<bool, CertError> {
    match validate_cert_chain(cert, store, now) {
        Err(CertError::UnknownTrc(isd, version)) => {
            for v in store.current_version(isd) + 1..=version {
                let Some(trc) = fetch(isd, v) else { break };
                if store.update(trc).is_err() {
                    break;
                }
            }
            validate_cert_chain(cert, store, now)
        }
        other => other,
    }
}
