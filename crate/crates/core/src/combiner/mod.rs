//! Building end-to-end forwarding paths out of up, core and down segments.

pub mod combine;
pub mod oracle;
pub mod path;

pub use combine::{combine, rank};
pub use oracle::enumerate_oracle;
pub use path::{CaseTag, EndToEndPath, PathHop};
