//! Path servers: segment registration, lookup with caching, and revocation.

pub mod messages;
pub mod segment;
pub mod server;
pub mod store;

pub use messages::PsMessage;
pub use segment::{PathSegment, SegHop};
pub use server::{
    LookupError, LookupOutcome, LookupReply, NetEnv, PathServer, PathServiceNet, RegisterOutcome, Rejection,
};
pub use store::{Insert, SegmentStore, STORE_CAPACITY};
