//! Experiment configuration, runners, metrics and persisted artifacts.

pub mod artifact;
pub mod config;
pub mod experiments;
pub mod metrics;
pub mod output;
pub mod plot;
pub mod train;
