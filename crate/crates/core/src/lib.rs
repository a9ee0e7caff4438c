//! Tool-call response analysis and entropy-aware policy-gradient weighting.

pub mod config;
pub mod env;
pub mod estimators;
pub mod objective;
pub mod policy;
pub mod region;
pub mod reward;
pub mod stats;
pub mod template;
pub mod tool_data;
