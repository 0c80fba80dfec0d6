//! The staged workflow behind the command line tool: demonstrations, reward learning, policy
//! learning, evaluation and reporting. Artifacts live under `out/s<scenario>/<stage>/` with a
//! manifest per stage.

mod config;
pub mod io;
mod manifest;
mod stages;

pub use config::*;
pub use manifest::*;
pub use stages::*;
