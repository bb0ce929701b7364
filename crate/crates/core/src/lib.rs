//! Hierarchical active inference over successor representations.

pub mod abstraction;
pub mod baselines;
pub mod cli;
pub mod core_model;
pub mod envs;
pub mod error;
pub mod harness;
pub mod planner;
pub mod successor;

pub use error::{Error, Result};
