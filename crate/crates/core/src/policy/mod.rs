//! Controllers for the sector: random and rule-based baselines, and a PPO learner driven by a
//! learned reward.

mod controllers;
mod eval;
mod ppo;

pub use controllers::*;
pub use eval::*;
pub use ppo::*;
