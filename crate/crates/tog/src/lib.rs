//! Std side of the tool-graph engine: configuration, remote backends, tool
//! runtime, parallel executor and the end-to-end pipeline.

pub mod config;
pub mod error;
pub mod executor;
pub mod pipeline;
pub mod remote;
pub mod tools;

pub use config::EngineConfig;
pub use error::{exit, Stage, TogError};
pub use pipeline::{BenchOutcome, Engine, PlanOutcome, RunOutcome};
