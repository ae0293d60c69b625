//! Decentralized pinch-lift-move coordination for teams of mobile
//! manipulators: SE(3) constellation rewards, payload command decomposition,
//! a desk-scale contact simulator, a phased curriculum, shared-parameter
//! policies with an evolution-strategies trainer, and evaluation metrics.

pub mod cli;
pub mod commands;
pub mod config;
pub mod curriculum;
pub mod episode;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod policy;
pub mod rewards;
pub mod training;
pub mod world;

pub use error::{PlmError, Result};
