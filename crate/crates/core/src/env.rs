//! Hourly control MDP over one sector of the simulated network.
//!
//! The observed state is `[s_ue(c1..cN), s_ip(c1..cN), s_prb(c1..cN)]`: the hour-averaged
//! active UE count, IP throughput (Mbps) and PRB utilization of each cell of the controlled
//! sector. Actions are `[w(c1..cN), source(c1..cN), admit(c1..cN), quality(c1..cN)]`: integer
//! IULB weights followed by the three integer MLB offsets per cell.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::lb::{IulbParams, LbParams, MlbParams, SectorLb, IULB_WEIGHT_MAX, MLB_OFFSET_MAX, MLB_OFFSET_MIN};
use crate::sim::{self, init_scenario, CellStats, Network, SimConfig, SimState, TrafficScenario};
use crate::{Error, Result};

pub const DEFAULT_HORIZON: usize = 168;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnvState(pub Vec<f64>);

impl EnvState {
    pub fn from_stats(stats: &[CellStats]) -> Self {
        let mut v = Vec::with_capacity(3 * stats.len());
        v.extend(stats.iter().map(|s| s.active_ues));
        v.extend(stats.iter().map(|s| s.x_i));
        v.extend(stats.iter().map(|s| s.prb_util));
        EnvState(v)
    }

    pub fn cells(&self) -> usize {
        self.0.len() / 3
    }

    pub fn ue(&self) -> &[f64] {
        &self.0[..self.cells()]
    }

    /// Per-cell IP throughput, Mbps.
    pub fn ip(&self) -> &[f64] {
        let n = self.cells();
        &self.0[n..2 * n]
    }

    pub fn prb(&self) -> &[f64] {
        let n = self.cells();
        &self.0[2 * n..]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionVec(pub Vec<i32>);

/// The bounded integer action box for a sector of `cells` cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionSpace {
    pub cells: usize,
}

impl ActionSpace {
    pub fn new(cells: usize) -> Self {
        Self { cells }
    }

    pub fn len(&self) -> usize {
        4 * self.cells
    }

    pub fn is_empty(&self) -> bool {
        self.cells == 0
    }

    /// Inclusive bounds of component `i`.
    pub fn bounds(&self, i: usize) -> (i32, i32) {
        if i < self.cells {
            (0, IULB_WEIGHT_MAX)
        } else {
            (MLB_OFFSET_MIN, MLB_OFFSET_MAX)
        }
    }

    /// Number of admissible values of component `i`.
    pub fn cardinality(&self, i: usize) -> usize {
        let (lo, hi) = self.bounds(i);
        (hi - lo + 1) as usize
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.cardinality(i)).collect()
    }

    pub fn contains(&self, a: &ActionVec) -> bool {
        a.0.len() == self.len()
            && a.0.iter().enumerate().all(|(i, v)| {
                let (lo, hi) = self.bounds(i);
                (lo..=hi).contains(v)
            })
    }

    /// Clamps every component into its bounds; returns the clamped action and how many
    /// components were out of bounds.
    pub fn clamp(&self, a: &ActionVec) -> (ActionVec, usize) {
        let mut clamped = 0;
        let v =
            a.0.iter()
                .enumerate()
                .map(|(i, &v)| {
                    let (lo, hi) = self.bounds(i);
                    if v < lo || v > hi {
                        clamped += 1;
                    }
                    v.clamp(lo, hi)
                })
                .collect();
        (ActionVec(v), clamped)
    }

    /// All IULB weights 5, all MLB offsets 0.
    pub fn neutral(&self) -> ActionVec {
        ActionVec((0..self.len()).map(|i| if i < self.cells { 5 } else { 0 }).collect())
    }

    pub fn decode(&self, a: &ActionVec, load_trigger: f64) -> SectorLb {
        let n = self.cells;
        let v = &a.0;
        SectorLb {
            iulb: IulbParams {
                weights: v[..n].to_vec(),
                load_trigger,
            },
            mlb: MlbParams {
                source_trigger_offset: v[n..2 * n].to_vec(),
                target_admit_offset: v[2 * n..3 * n].to_vec(),
                ho_quality_offset: v[3 * n..].to_vec(),
            },
        }
    }
}

/// Maps observed states to actions.
pub trait Controller {
    fn name(&self) -> String;
    fn act(&mut self, state: &EnvState) -> ActionVec;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub sim: SimConfig,
    /// Global index of the controlled sector (sector 0 of the central eNB by default).
    pub controlled_sector: usize,
    pub horizon: usize,
    pub warmup_hours: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            controlled_sector: 0,
            horizon: DEFAULT_HORIZON,
            warmup_hours: 1,
        }
    }
}

pub struct Env {
    network: Arc<Network>,
    config: EnvConfig,
    space: ActionSpace,
    sim: Option<SimState>,
    lb: LbParams,
    last_cell_stats: Vec<CellStats>,
    /// Number of out-of-bounds action components clamped so far.
    pub clamp_warnings: u64,
}

impl Env {
    pub fn new(config: EnvConfig) -> Result<Self> {
        let network = Network::new(config.sim.clone())?;
        Self::with_network(network, config)
    }

    /// Builds an environment on a shared network. The network must have been built from
    /// `config.sim`.
    pub fn with_network(network: Arc<Network>, config: EnvConfig) -> Result<Self> {
        if config.controlled_sector >= network.topology.sector_count() {
            return Err(Error::Config(format!(
                "controlled sector {} does not exist",
                config.controlled_sector
            )));
        }
        let space = ActionSpace::new(network.cells_per_sector());
        let lb = network.default_lb();
        Ok(Self {
            network,
            config,
            space,
            sim: None,
            lb,
            last_cell_stats: Vec::new(),
            clamp_warnings: 0,
        })
    }

    pub fn action_space(&self) -> ActionSpace {
        self.space
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn network(&self) -> &Arc<Network> {
        &self.network
    }

    pub fn sim(&self) -> Option<&SimState> {
        self.sim.as_ref()
    }

    /// Statistics of every cell for the last completed hour.
    pub fn last_cell_stats(&self) -> &[CellStats] {
        &self.last_cell_stats
    }

    /// Starts a fresh simulation and runs the warm-up under default parameters.
    pub fn reset(&mut self, scenario: &TrafficScenario, seed: u64) -> Result<EnvState> {
        self.sim = Some(init_scenario(&self.network, scenario, seed)?);
        self.lb = self.network.default_lb();
        let mut state = None;
        for _ in 0..self.config.warmup_hours.max(1) {
            state = Some(self.run_hour());
        }
        Ok(state.expect("at least one warm-up hour"))
    }

    /// Applies `action` to the controlled sector for one control interval and returns the
    /// hour-averaged state.
    pub fn step(&mut self, action: &ActionVec) -> Result<EnvState> {
        if self.sim.is_none() {
            return Err(Error::Config("environment stepped before reset".into()));
        }
        if action.0.len() != self.space.len() {
            return Err(Error::Dimension {
                context: "action",
                expected: self.space.len(),
                got: action.0.len(),
            });
        }
        let (action, clamped) = self.space.clamp(action);
        if clamped > 0 {
            self.clamp_warnings += clamped as u64;
            log::warn!("clamped {clamped} out-of-bounds action components");
        }
        self.lb.sectors[self.config.controlled_sector] =
            self.space.decode(&action, self.network.config.iulb_load_trigger);
        Ok(self.run_hour())
    }

    fn run_hour(&mut self) -> EnvState {
        let sim = self.sim.as_mut().expect("reset before stepping");
        let dt = self.network.config.tick_seconds;
        for _ in 0..self.network.config.ticks_per_control {
            sim::state_advance(sim, &self.lb, dt);
        }
        self.last_cell_stats = sim.all_cell_stats();
        let state = EnvState::from_stats(&sim.cell_stats(self.config.controlled_sector));
        sim.reset_window();
        state
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub scenario: u32,
    pub seed: u64,
    pub controller: String,
    /// `states[t]` is the hour-averaged state observed after applying `actions[t]`.
    pub states: Vec<EnvState>,
    pub actions: Vec<ActionVec>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trajectory serializes")
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        crate::pipeline::io::write_string(path, &self.to_json())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        crate::pipeline::io::read_json(path)
    }

    /// One row per hour: `hour` then the state components.
    pub fn write_states_csv(&self, path: &Path) -> Result<()> {
        let n = self.states.first().map_or(0, EnvState::cells);
        let mut header = vec!["hour".to_string()];
        for prefix in ["s_ue", "s_ip", "s_prb"] {
            header.extend((1..=n).map(|c| format!("{prefix}_c{c}")));
        }
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(&header).map_err(|e| Error::csv(path, e))?;
        for (t, s) in self.states.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(s.0.iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Runs `controller` for `horizon` hours from a fresh reset.
pub fn rollout(
    env: &mut Env,
    controller: &mut dyn Controller,
    scenario: &TrafficScenario,
    seed: u64,
    horizon: usize,
) -> Result<Trajectory> {
    let mut obs = env.reset(scenario, seed)?;
    let mut states = Vec::with_capacity(horizon);
    let mut actions = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let action = controller.act(&obs);
        obs = env.step(&action)?;
        states.push(obs.clone());
        actions.push(action);
    }
    Ok(Trajectory {
        scenario: scenario.id,
        seed,
        controller: controller.name(),
        states,
        actions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Constant(ActionVec);

    impl Controller for Constant {
        fn name(&self) -> String {
            "constant".into()
        }
        fn act(&mut self, _: &EnvState) -> ActionVec {
            self.0.clone()
        }
    }

    fn env() -> Env {
        Env::new(EnvConfig::default()).unwrap()
    }

    #[test]
    fn reset_is_deterministic_and_well_formed() {
        let sc = TrafficScenario::builtin(1).unwrap();
        let mut e = env();
        let a = e.reset(&sc, 42).unwrap();
        let b = e.reset(&sc, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.0.len(), 12);
        assert!(a.prb().iter().all(|p| (0.0..=1.0).contains(p)));
        assert!(a.ue().iter().chain(a.ip()).all(|v| *v >= 0.0));
    }

    #[test]
    fn step_before_reset_fails() {
        let mut e = env();
        let a = e.action_space().neutral();
        assert!(e.step(&a).is_err());
    }

    #[test]
    fn clamping() {
        let space = ActionSpace::new(4);
        assert_eq!(space.len(), 16);
        let mut a = space.neutral();
        a.0[1] = 12;
        a.0[6] = -9;
        let (c, n) = space.clamp(&a);
        assert_eq!(n, 2);
        assert_eq!(c.0[1], 10);
        assert_eq!(c.0[6], -6);
        assert!(space.contains(&c));

        let sc = TrafficScenario::builtin(1).unwrap();
        let mut e = env();
        e.reset(&sc, 1).unwrap();
        e.step(&a).unwrap();
        assert_eq!(e.clamp_warnings, 2);
    }

    #[test]
    fn decode_layout() {
        let space = ActionSpace::new(4);
        let a = ActionVec((0..16).map(|i| if i < 4 { i } else { i - 10 }).collect());
        let lb = space.decode(&a, 0.5);
        assert_eq!(lb.iulb.weights, vec![0, 1, 2, 3]);
        assert_eq!(lb.mlb.source_trigger_offset, vec![-6, -5, -4, -3]);
        assert_eq!(lb.mlb.target_admit_offset, vec![-2, -1, 0, 1]);
        assert_eq!(lb.mlb.ho_quality_offset, vec![2, 3, 4, 5]);
    }

    #[test]
    fn identical_steps_identical_states() {
        let sc = TrafficScenario::builtin(2).unwrap();
        let space = ActionSpace::new(4);
        let run = || {
            let mut e = env();
            e.reset(&sc, 9).unwrap();
            let a = ActionVec(vec![1, 9, 3, 7, -2, 0, 4, 1, 2, -3, 5, 6, 0, 0, 1, -1]);
            assert!(space.contains(&a));
            (e.step(&a).unwrap(), e.step(&a).unwrap())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn zero_weights_stop_reselection_in_controlled_sector() {
        let sc = TrafficScenario::builtin(1).unwrap();
        let mut e = env();
        e.reset(&sc, 3).unwrap();
        let mut a = e.action_space().neutral();
        a.0[..4].iter_mut().for_each(|w| *w = 0);
        let before = e.sim().unwrap().counters.reselections_per_sector.clone();
        let clock = e.sim().unwrap().clock;
        e.step(&a).unwrap();
        let sim = e.sim().unwrap();
        assert_eq!(sim.counters.reselections_per_sector[0], before[0]);
        assert!(sim.clock > clock);
    }

    #[test]
    fn rollout_lengths_and_determinism() {
        let sc = TrafficScenario::builtin(1).unwrap();
        let space = ActionSpace::new(4);
        let mut e = env();
        let t1 = rollout(&mut e, &mut Constant(space.neutral()), &sc, 5, 1).unwrap();
        assert_eq!(t1.states.len(), 1);
        assert_eq!(t1.actions.len(), 1);
        let t3 = rollout(&mut e, &mut Constant(space.neutral()), &sc, 5, 3).unwrap();
        let t3b = rollout(&mut e, &mut Constant(space.neutral()), &sc, 5, 3).unwrap();
        assert_eq!(t3.to_json(), t3b.to_json());
        assert_eq!(t3.states[0], t1.states[0]);
    }

    #[test]
    fn trajectory_json_round_trip_is_exact() {
        let t = Trajectory {
            scenario: 2,
            seed: 17,
            controller: "random".into(),
            states: vec![EnvState(vec![
                0.1,
                1.0 / 3.0,
                2.5e-17,
                7.0,
                1e300,
                0.0,
                3.3,
                1.1,
                0.2,
                0.3,
                0.4,
                0.99,
            ])],
            actions: vec![ActionVec(vec![0, 1, 2, 3, -6, 6, 0, 0, 1, 1, 1, 1, -1, -1, -1, -1])],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        t.save_json(&path).unwrap();
        let back = Trajectory::load_json(&path).unwrap();
        assert_eq!(back, t);
        let text = std::fs::read_to_string(&path).unwrap();
        for key in [
            "\"scenario\"",
            "\"seed\"",
            "\"controller\"",
            "\"states\"",
            "\"actions\"",
        ] {
            assert!(text.contains(key));
        }
        let csv_path = dir.path().join("t.csv");
        t.write_states_csv(&csv_path).unwrap();
        let csv = std::fs::read_to_string(&csv_path).unwrap();
        assert!(csv.starts_with("hour,s_ue_c1,"));
        assert_eq!(csv.lines().count(), 2);
    }
}
