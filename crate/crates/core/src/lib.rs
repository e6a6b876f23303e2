//! Deterministic simulator of a path-aware inter-domain network: topology,
//! control-plane trust, beaconing, path lookup and a packet-carried-path
//! data plane, driven by a discrete-event engine.

pub mod beaconing;
pub mod combiner;
pub mod crypto;
pub mod dataplane;
pub mod path_service;
pub mod sim;
pub mod time;
pub mod topology;
pub mod trust;

#[doc(hidden)]
pub mod testkit;
