//! Feed service: durable event log, versioned score snapshots and a JSON HTTP API.

pub mod engine;
pub mod error;
pub mod http;
pub mod log;
pub mod snapshot;

pub use engine::{Engine, EngineConfig, FeedMode, FeedRequest, FeedResponse};
pub use error::{ServiceError, ServiceResult};
pub use snapshot::Snapshot;
