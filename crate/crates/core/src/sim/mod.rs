//! Discrete-event engine hosting every AS, plus scenarios and metrics.

pub mod engine;
pub mod flow;
pub mod metrics;
pub mod random;
pub mod scenario;
pub mod world;

pub use engine::Engine;
pub use metrics::Metrics;
pub use scenario::Scenario;
