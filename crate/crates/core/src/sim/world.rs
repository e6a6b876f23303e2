//! Key material, TRCs and certificates generated for a topology.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::crypto::{AsSecrets, KeyPair};
use crate::time::SimTime;
use crate::topology::{AsId, IsdId, Topology};
use crate::trust::{AsCert, Trc, TrcStore, TrustRoot};

/// Independent generator for one named component. Streams for different
/// labels never share draws, so adding a component leaves the others intact.
pub fn stream(seed: u64, label: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_be_bytes());
    h.update(label.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// TRC parameters of one ISD.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrcConfig {
    pub roots: u8,
    pub quorum_cert: u32,
    pub quorum_trc: u32,
}

impl Default for TrcConfig {
    fn default() -> Self {
        TrcConfig {
            roots: 3,
            quorum_cert: 2,
            quorum_trc: 2,
        }
    }
}

pub const CERT_LIFETIME: SimTime = SimTime::from_secs(30 * 24 * 3600);

#[derive(Debug, Clone)]
pub struct World {
    pub topo: Topology,
    pub secrets: BTreeMap<AsId, AsSecrets>,
    /// Root keys per ISD, indexed like the TRC's trust roots.
    pub root_keys: BTreeMap<IsdId, Vec<KeyPair>>,
    pub configs: BTreeMap<IsdId, TrcConfig>,
    /// Version-1 TRC of every ISD.
    pub trcs: BTreeMap<IsdId, Trc>,
    pub certs: BTreeMap<AsId, AsCert>,
}

impl World {
    pub fn generate(topo: Topology, seed: u64, configs: &BTreeMap<IsdId, TrcConfig>) -> World {
        let mut secrets = BTreeMap::new();
        for &id in topo.ases.keys() {
            let mut rng = stream(seed, &format!("keys/{id}"));
            secrets.insert(id, AsSecrets::generate(id, &mut rng));
        }
        let mut root_keys = BTreeMap::new();
        let mut trcs = BTreeMap::new();
        let mut all_configs = BTreeMap::new();
        for &isd in &topo.isds {
            let cfg = configs.get(&isd).copied().unwrap_or_default();
            let mut rng = stream(seed, &format!("roots/{isd}"));
            let keys: Vec<KeyPair> = (0..cfg.roots).map(|_| KeyPair::generate(&mut rng)).collect();
            let roots = keys
                .iter()
                .enumerate()
                .map(|(i, k)| TrustRoot {
                    role: format!("root{i}"),
                    public: k.public,
                })
                .collect();
            let mut trc = Trc::new(isd, 1, roots, cfg.quorum_cert, cfg.quorum_trc);
            for (i, k) in keys.iter().enumerate() {
                trc.add_signature(i as u8, k);
            }
            trcs.insert(isd, trc);
            root_keys.insert(isd, keys);
            all_configs.insert(isd, cfg);
        }
        let mut certs = BTreeMap::new();
        for (&id, s) in &secrets {
            let trc = &trcs[&id.isd];
            let keys = &root_keys[&id.isd];
            let signers: Vec<(u8, &KeyPair)> = keys
                .iter()
                .enumerate()
                .take(trc.quorum_cert as usize)
                .map(|(i, k)| (i as u8, k))
                .collect();
            certs.insert(
                id,
                AsCert::issue(id, s.signing.public, (SimTime::ZERO, CERT_LIFETIME), trc, &signers),
            );
        }
        World {
            topo,
            secrets,
            root_keys,
            configs: all_configs,
            trcs,
            certs,
        }
    }

    /// A TRC store holding version 1 of every ISD.
    pub fn bootstrap_store(&self) -> TrcStore {
        let mut store = TrcStore::new();
        for trc in self.trcs.values() {
            store.bootstrap(trc.clone());
        }
        store
    }

    /// The successor of `prev` signed by the given roots of `prev`.
    pub fn next_trc(&self, prev: &Trc, signers: &[u8]) -> Trc {
        let mut next = Trc::new(
            prev.isd,
            prev.version + 1,
            prev.trust_roots.clone(),
            prev.quorum_cert,
            prev.quorum_trc,
        );
        let keys = &self.root_keys[&prev.isd];
        for &i in signers {
            if let Some(k) = keys.get(i as usize) {
                next.add_signature(i, k);
            }
        }
        next
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trust::validate_cert_chain;

    const FIG: &str = include_str!("../../../../fixtures/fig.topo");

    #[test]
    fn certificates_validate_and_streams_differ() {
        let topo = Topology::parse(FIG).unwrap();
        let w = World::generate(topo, 1, &BTreeMap::new());
        let store = w.bootstrap_store();
        for cert in w.certs.values() {
            assert_eq!(validate_cert_chain(cert, &store, SimTime::from_secs(1)), Ok(true));
        }
        let a = w.secrets[&AsId::new(1, 1)].signing.public;
        let b = World::generate(w.topo.clone(), 1, &BTreeMap::new()).secrets[&AsId::new(1, 1)]
            .signing
            .public;
        assert_eq!(a, b);
        let c = World::generate(w.topo.clone(), 2, &BTreeMap::new()).secrets[&AsId::new(1, 1)]
            .signing
            .public;
        assert_ne!(a, c);
    }

    #[test]
    fn successor_needs_quorum() {
        let topo = Topology::parse(FIG).unwrap();
        let w = World::generate(topo, 1, &BTreeMap::new());
        let isd = IsdId::new(1).unwrap();
        let mut store = w.bootstrap_store();
        let weak = w.next_trc(&w.trcs[&isd], &[0]);
        assert!(store.update(weak).is_err());
        let good = w.next_trc(&w.trcs[&isd], &[0, 2]);
        assert!(store.update(good).is_ok());
        assert_eq!(store.current_version(isd), 2);
    }
}
