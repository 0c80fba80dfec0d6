//! Communication load balancing with rewards learned from ranked demonstrations.
//!
//! The crate is organized bottom-up:
//!
//! - [`sim`]: a deterministic hex-7 RAN simulator (topology, radio, traffic, per-cell accounting).
//! - [`lb`]: the two load-balancing mechanisms an agent controls (idle-mode reselection and
//!   mobility load balancing).
//! - [`env`]: the hourly control MDP, trajectories and their persistence.
//! - [`kpi`]: throughput KPIs, the ranking function, trajectory ranking and Pearson correlation.
//! - [`nn`]: multilayer perceptrons with analytic backpropagation and Adam.
//! - [`trex`]: sub-trajectory samplers (contiguous and temporally consistent), the pairwise
//!   preference loss and reward training.
//! - [`policy`]: rule-based and random controllers, PPO, and controller evaluation.
//! - [`pipeline`]: the staged end-to-end workflow used by the command line tool.

pub mod env;
pub mod error;
pub mod kpi;
pub mod lb;
pub mod nn;
pub mod pipeline;
pub mod policy;
pub mod sim;
pub mod trex;

pub use error::{Error, Result};
