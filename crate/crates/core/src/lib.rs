//! Online hierarchical forecasting for half-hourly consumption panels.
//!
//! The crate builds household partitions, assembles summation
//! hierarchies, runs per-node online aggregation of expert forecasts
//! under delayed feedback, projects forecasts onto the hierarchy
//! constraints, and evaluates the resulting strategies.

pub mod aggregate;
pub mod cluster;
pub mod error;
pub mod evaluate;
pub mod features;
pub mod hierarchy;
pub mod panel;
pub mod pipeline;
pub mod standardize;
pub mod synth;

pub use error::{Error, Result};
