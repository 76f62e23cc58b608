//! Configuration and the end-to-end pipeline behind the `feedrank` binary.

pub mod config;
pub mod pipeline;

pub use config::{ConfigError, RunConfig};
pub use pipeline::{run_pipeline, write_outputs, PipelineOutput, RunReport};
