//! Simplified, fully deterministic RAN simulator.

mod coverage;
pub mod radio;
mod state;
pub mod topology;
pub mod traffic;

pub use coverage::CoverageMap;
pub use radio::{RadioConfig, RadioModel};
pub use state::state_advance;
pub use state::{
    init_scenario, step_sim, write_cell_stats_csv, CellAccumulator, CellStats, HourlyCellStats, Network, SimConfig,
    SimCounters, SimState, Ue, UeMode,
};
pub use topology::{build_topology, CarrierSpec, Cell, Point, Topology, TopologyConfig};
pub use traffic::{DiurnalProfile, TrafficScenario};
