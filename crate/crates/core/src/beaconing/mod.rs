//! Beaconing: creation, extension, validation and selection of path
//! construction beacons, plus the per-AS beacon server.

pub mod pcb;
pub mod select;
pub mod server;
pub mod validate;

pub use pcb::{HopEntry, HopKey, PeerEntry, Pcb, PcbError, PcbInfo, PcbKind, Signer};
pub use select::{BeaconPolicy, Candidate};
pub use server::{AsView, BeaconServer, Emission, LinkRound, PoolEntry, Registrations};
pub use validate::{validate_pcb, CertSource, DirectoryCerts, PcbInvalid, Verdict};
