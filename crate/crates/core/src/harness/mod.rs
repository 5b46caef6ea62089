pub mod config;
pub mod pipeline;
pub mod scenario;
pub mod texture;
pub mod votes;

pub use config::PipelineConfig;
pub use pipeline::{run_pipeline, run_stages, Cache, PipelineInputs, PipelineOutput, CACHE_ENV};
