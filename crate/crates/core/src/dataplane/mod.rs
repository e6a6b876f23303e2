//! Packet-carried forwarding state: opaque fields, the header codec, the
//! border router and authenticated control messages.

pub mod header;
pub mod opaque;
pub mod router;
pub mod scmp;

pub use header::{ForwardingPath, HeaderError, HostAddr, InfoField, Packet, SegmentFields, SegmentKind};
pub use opaque::{build_of, verify_of, ArrivalCheck, OfReject, OpaqueField};
pub use router::{forward, forward_bytes, Action, Arrival, DropReason, RouterContext};
pub use scmp::{scmp_auth, scmp_verify, ScmpMessage, ScmpReject, ScmpType};
