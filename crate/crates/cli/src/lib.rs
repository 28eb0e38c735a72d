//! Command-line driver: scenario configs, run pipelines, and the
//! verification suites.

pub mod config;
pub mod pipeline;
pub mod suites;
