use std::f64::consts::TAU;
use std::path::Path;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};

use super::coverage::CoverageMap;
use super::radio::{RadioConfig, RadioModel};
use super::topology::{build_topology, Point, Topology, TopologyConfig};
use super::traffic::TrafficScenario;
use crate::lb::{apply_iulb, apply_mlb, IulbParams, LbParams, MlbConfig, MlbParams, SectorLb};
use crate::{Error, Result};

/// Backlogs below this many bits count as drained.
const DRAIN_EPS_BITS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub topology: TopologyConfig,
    pub radio: RadioConfig,
    pub mlb: MlbConfig,
    /// Simulation tick, seconds.
    pub tick_seconds: f64,
    /// Ticks per control interval (one hour by default).
    pub ticks_per_control: usize,
    /// Resolution of the camping/efficiency lookup grid, meters.
    pub coverage_resolution: f64,
    /// IULB trigger used by every sector unless overridden.
    pub iulb_load_trigger: f64,
    /// IULB weight used by uncontrolled sectors.
    pub default_iulb_weight: i32,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            topology: TopologyConfig::default(),
            radio: RadioConfig::default(),
            mlb: MlbConfig::default(),
            tick_seconds: 10.0,
            ticks_per_control: 360,
            coverage_resolution: 10.0,
            iulb_load_trigger: 0.5,
            default_iulb_weight: 5,
        }
    }
}

/// Static network description shared by every run on the same configuration.
#[derive(Debug)]
pub struct Network {
    pub config: SimConfig,
    pub topology: Topology,
    pub radio: RadioModel,
    pub mlb: MlbConfig,
    pub mlb_base_trigger: f64,
    pub coverage: CoverageMap,
}

impl Network {
    pub fn new(config: SimConfig) -> Result<Arc<Self>> {
        if !(config.tick_seconds > 0.0) || config.ticks_per_control == 0 {
            return Err(Error::Config(
                "tick_seconds and ticks_per_control must be positive".into(),
            ));
        }
        if !(config.coverage_resolution > 0.0) {
            return Err(Error::Config("coverage_resolution must be positive".into()));
        }
        let topology = build_topology(&config.topology)?;
        let radio = RadioModel::new(config.radio.clone());
        let coverage = CoverageMap::new(&topology, &radio, config.coverage_resolution);
        let mlb_base_trigger = match config.mlb.base_trigger_mbps {
            Some(v) if v > 0.0 => v,
            Some(v) => return Err(Error::Config(format!("base trigger must be positive, got {v}"))),
            None => percentile(
                topology
                    .cells
                    .iter()
                    .map(|c| c.capacity * coverage.mean_efficiency(c.sector, c.carrier))
                    .collect(),
                0.2,
            ),
        };
        Ok(Arc::new(Self {
            mlb: config.mlb.clone(),
            config,
            topology,
            radio,
            mlb_base_trigger,
            coverage,
        }))
    }

    pub fn cells_per_sector(&self) -> usize {
        self.topology.cells_per_sector
    }

    /// Parameters applied to every sector that is not under external control.
    pub fn default_sector_lb(&self) -> SectorLb {
        let n_c = self.cells_per_sector();
        SectorLb {
            iulb: IulbParams {
                weights: vec![self.config.default_iulb_weight; n_c],
                load_trigger: self.config.iulb_load_trigger,
            },
            mlb: MlbParams::neutral(n_c),
        }
    }

    pub fn default_lb(&self) -> LbParams {
        LbParams::uniform(self.topology.sector_count(), self.default_sector_lb())
    }
}

/// Linear-interpolated percentile, `q` in [0, 1].
fn percentile(mut values: Vec<f64>, q: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let pos = q * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    values[lo] + (values[hi] - values[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UeMode {
    Idle,
    Active,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ue {
    pub id: usize,
    pub position: Point,
    pub speed: f64,
    pub heading: f64,
    /// Cached `speed * (cos heading, sin heading)`, m/s.
    pub velocity: Point,
    pub mode: UeMode,
    pub serving_cell: usize,
    /// Carrier the UE camps on while idle.
    pub carrier: usize,
    pub backlog: f64,
    pub next_request_time: f64,
}

impl Ue {
    pub fn is_active(&self) -> bool {
        self.mode == UeMode::Active
    }
}

/// Per-cell accumulators over the current control window.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CellAccumulator {
    pub served_bits: f64,
    /// Σ over UEs of the seconds each spent with data being served.
    pub ue_active_seconds: f64,
    pub prb_seconds: f64,
    /// Time integral of the active UE count.
    pub active_count_seconds: f64,
    pub idle_count_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimCounters {
    pub requests: u64,
    pub reselections: u64,
    pub handovers: u64,
    pub reselections_per_sector: Vec<u64>,
    pub handovers_per_sector: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub cell_id: usize,
    /// IP throughput over the window, Mbps.
    pub x_i: f64,
    pub prb_util: f64,
    pub active_ues: f64,
    pub idle_ues: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimState {
    #[serde(skip)]
    pub network: Arc<Network>,
    pub scenario: TrafficScenario,
    pub clock: f64,
    pub ues: Vec<Ue>,
    pub window: Vec<CellAccumulator>,
    pub window_seconds: f64,
    /// PRB utilization of each cell during the last tick.
    pub last_prb_util: Vec<f64>,
    pub counters: SimCounters,
    traffic_rng: ChaCha8Rng,
    lb_rng: ChaCha8Rng,
    #[serde(skip)]
    scratch: Scratch,
}

#[derive(Debug, Clone, Default)]
struct Scratch {
    active_by_cell: Vec<Vec<usize>>,
    /// `active_by_cell` is a superset of the active UEs with their current serving cells.
    lists_valid: bool,
    need: Vec<(f64, usize, f64)>,
}

/// Places `ue_count` UEs uniformly in the coverage disc, all idle, camped on the strongest
/// cell of their priority carrier, with their first request scheduled.
pub fn init_scenario(network: &Arc<Network>, scenario: &TrafficScenario, seed: u64) -> Result<SimState> {
    scenario.validate()?;
    let topo = &network.topology;
    let n_c = topo.cells_per_sector;
    if !scenario.carrier_mix.is_empty() && scenario.carrier_mix.len() != n_c {
        return Err(Error::Config(format!(
            "carrier_mix has {} entries for {n_c} carriers",
            scenario.carrier_mix.len()
        )));
    }
    let mix = if scenario.carrier_mix.is_empty() {
        vec![1.0; n_c]
    } else {
        scenario.carrier_mix.clone()
    };
    let carrier_dist = WeightedIndex::new(&mix).map_err(|e| Error::Config(e.to_string()))?;
    let interval = Exp::new(1.0 / scenario.request_interval_mean_s).map_err(|e| Error::Config(e.to_string()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lb_rng = ChaCha8Rng::seed_from_u64(seed);
    lb_rng.set_stream(1);

    let radius = topo.coverage_radius;
    let ues = (0..scenario.ue_count)
        .map(|id| {
            let r = radius * rng.random::<f64>().sqrt();
            let theta = rng.random::<f64>() * TAU;
            let position = [r * theta.cos(), r * theta.sin()];
            let heading = rng.random::<f64>() * TAU;
            let [lo, hi] = scenario.speed_range;
            let speed = lo + (hi - lo) * rng.random::<f64>();
            let carrier = carrier_dist.sample(&mut rng);
            let next_request_time = interval.sample(&mut rng);
            Ue {
                id,
                position,
                speed,
                heading,
                velocity: [speed * heading.cos(), speed * heading.sin()],
                mode: UeMode::Idle,
                serving_cell: topo.cell_id(network.coverage.best_sector(position), carrier),
                carrier,
                backlog: 0.0,
                next_request_time,
            }
        })
        .collect();

    let cells = topo.cells.len();
    Ok(SimState {
        network: network.clone(),
        scenario: scenario.clone(),
        clock: 0.0,
        ues,
        window: vec![CellAccumulator::default(); cells],
        window_seconds: 0.0,
        last_prb_util: vec![0.0; cells],
        counters: SimCounters {
            reselections_per_sector: vec![0; topo.sector_count()],
            handovers_per_sector: vec![0; topo.sector_count()],
            ..Default::default()
        },
        traffic_rng: rng,
        lb_rng,
        scratch: Scratch::default(),
    })
}

impl SimState {
    pub fn topology(&self) -> &Topology {
        &self.network.topology
    }

    /// Signal of a UE toward a cell, dB.
    pub fn ue_cell_signal(&self, ue: usize, cell: usize) -> f64 {
        let ue = &self.ues[ue];
        let topo = &self.network.topology;
        let sector = topo.sector_of(cell);
        let (best, best_signal, _) = self.network.coverage.lookup(ue.position);
        let carrier = cell % topo.cells_per_sector;
        if best == sector {
            best_signal + topo.carrier_offsets_db[carrier]
        } else {
            self.network.radio.signal_quality(topo, ue.position, &topo.cells[cell])
        }
    }

    /// Signals of a UE toward every cell of `sector`, dB, indexed by carrier.
    pub fn ue_sector_signals(&self, ue: usize, sector: usize, out: &mut [f64]) {
        let topo = &self.network.topology;
        let position = self.ues[ue].position;
        let (best, best_signal, _) = self.network.coverage.lookup(position);
        for (carrier, slot) in out.iter_mut().enumerate() {
            *slot = if best == sector {
                best_signal + topo.carrier_offsets_db[carrier]
            } else {
                let cell = &topo.cells[topo.cell_id(sector, carrier)];
                self.network.radio.signal_quality(topo, position, cell)
            };
        }
    }

    fn ue_efficiency(&self, ue: &Ue) -> f64 {
        let topo = &self.network.topology;
        let (best, _, eff) = self.network.coverage.lookup(ue.position);
        let carrier = ue.serving_cell % topo.cells_per_sector;
        let e = if best == topo.sector_of(ue.serving_cell) {
            eff[carrier] as f64
        } else {
            let s = self
                .network
                .radio
                .signal_quality(topo, ue.position, &topo.cells[ue.serving_cell]);
            self.network.radio.efficiency(s)
        };
        e.max(1e-6)
    }

    /// Per-UE throughput of a cell over the current window, or its capacity when it has
    /// served nothing yet.
    pub fn throughput_estimate(&self, cell: usize) -> f64 {
        let acc = &self.window[cell];
        if acc.ue_active_seconds > 0.0 {
            acc.served_bits / acc.ue_active_seconds / 1e6
        } else {
            self.network.topology.cells[cell].capacity
        }
    }

    /// Window averages for the `N_C` cells of `sector`.
    pub fn cell_stats(&self, sector: usize) -> Vec<CellStats> {
        let n_c = self.network.topology.cells_per_sector;
        (sector * n_c..(sector + 1) * n_c).map(|c| self.cell_stat(c)).collect()
    }

    pub fn all_cell_stats(&self) -> Vec<CellStats> {
        (0..self.window.len()).map(|c| self.cell_stat(c)).collect()
    }

    fn cell_stat(&self, cell: usize) -> CellStats {
        let acc = &self.window[cell];
        let w = self.window_seconds;
        let x_i = if acc.ue_active_seconds > 0.0 {
            acc.served_bits / acc.ue_active_seconds / 1e6
        } else {
            0.0
        };
        let per_second = |v: f64| if w > 0.0 { v / w } else { 0.0 };
        CellStats {
            cell_id: cell,
            x_i,
            prb_util: per_second(acc.prb_seconds).clamp(0.0, 1.0),
            active_ues: per_second(acc.active_count_seconds),
            idle_ues: per_second(acc.idle_count_seconds),
        }
    }

    /// Starts a new control window.
    pub fn reset_window(&mut self) {
        self.window.iter_mut().for_each(|a| *a = CellAccumulator::default());
        self.window_seconds = 0.0;
    }

    pub fn ue_count_by_cell(&self) -> Vec<usize> {
        let mut counts = vec![0; self.window.len()];
        for ue in &self.ues {
            counts[ue.serving_cell] += 1;
        }
        counts
    }

    pub fn hour_of_week(&self) -> usize {
        (self.clock / 3600.0).floor() as usize
    }

    fn move_ues(&mut self, dt: f64) {
        let radius = self.network.topology.coverage_radius;
        let r2_max = radius * radius;
        for ue in &mut self.ues {
            if ue.speed == 0.0 {
                continue;
            }
            let p0 = ue.position;
            let v = ue.velocity;
            let mut p = [p0[0] + v[0] * dt, p0[1] + v[1] * dt];
            if p[0] * p[0] + p[1] * p[1] > r2_max {
                // Specular reflection at the boundary crossing: solve |p0 + t v| = R.
                let a = v[0] * v[0] + v[1] * v[1];
                let b = p0[0] * v[0] + p0[1] * v[1];
                let c = (p0[0] * p0[0] + p0[1] * p0[1] - r2_max).min(0.0);
                let t = ((-b + (b * b - a * c).max(0.0).sqrt()) / a).clamp(0.0, dt);
                let q = [p0[0] + v[0] * t, p0[1] + v[1] * t];
                let n = [q[0] / radius, q[1] / radius];
                let dot = v[0] * n[0] + v[1] * n[1];
                let w = [v[0] - 2.0 * dot * n[0], v[1] - 2.0 * dot * n[1]];
                p = [q[0] + w[0] * (dt - t), q[1] + w[1] * (dt - t)];
                let r2 = p[0] * p[0] + p[1] * p[1];
                if r2 > r2_max {
                    let k = radius / r2.sqrt();
                    p = [p[0] * k, p[1] * k];
                }
                ue.velocity = w;
                ue.heading = w[1].atan2(w[0]).rem_euclid(TAU);
            }
            ue.position = p;
        }
    }

    /// Re-camps every UE on the best sector of its carrier, spawns the requests due before
    /// the end of the tick and groups active UEs by serving cell.
    fn camp_and_spawn(&mut self, dt: f64) {
        let end = self.clock + dt;
        let network = self.network.clone();
        let n_c = network.topology.cells_per_sector;
        let profile = &self.scenario.diurnal_profile;
        let size = LogNormal::new(
            self.scenario.packet_size_mean_bits.ln() - 0.5 * self.scenario.packet_size_sigma.powi(2),
            self.scenario.packet_size_sigma,
        )
        .expect("validated scenario");
        let interval = Exp::new(1.0 / self.scenario.request_interval_mean_s).expect("validated scenario");
        let rng = &mut self.traffic_rng;
        let active_by_cell = &mut self.scratch.active_by_cell;
        active_by_cell.resize_with(network.topology.cells.len(), Vec::new);
        active_by_cell.iter_mut().for_each(Vec::clear);
        for (i, ue) in self.ues.iter_mut().enumerate() {
            // Idle UEs re-camp and active UEs follow coverage on their current carrier.
            ue.serving_cell = network.coverage.best_sector(ue.position) * n_c + ue.carrier;
            while ue.next_request_time < end {
                let bits = size.sample(rng) * profile.at_seconds(ue.next_request_time);
                ue.backlog += bits;
                ue.next_request_time += interval.sample(rng);
                self.counters.requests += 1;
                if ue.backlog > DRAIN_EPS_BITS {
                    ue.mode = UeMode::Active;
                }
            }
            if ue.is_active() {
                active_by_cell[ue.serving_cell].push(i);
            } else {
                self.window[ue.serving_cell].idle_count_seconds += dt;
            }
        }
        self.scratch.lists_valid = true;
    }

    /// Active UEs grouped by serving cell. Reuses the lists built during the tick when they
    /// are still valid. Return them with `restore_active_lists`.
    pub(crate) fn take_active_lists(&mut self) -> Vec<Vec<usize>> {
        let mut lists = std::mem::take(&mut self.scratch.active_by_cell);
        if self.scratch.lists_valid {
            for list in &mut lists {
                list.retain(|&u| self.ues[u].is_active());
            }
        } else {
            lists.resize_with(self.window.len(), Vec::new);
            lists.iter_mut().for_each(Vec::clear);
            for (i, ue) in self.ues.iter().enumerate() {
                if ue.is_active() {
                    lists[ue.serving_cell].push(i);
                }
            }
        }
        lists
    }

    /// Hands the lists back; they are stale once serving cells may have changed.
    pub(crate) fn restore_active_lists(&mut self, lists: Vec<Vec<usize>>) {
        self.scratch.active_by_cell = lists;
        self.scratch.lists_valid = false;
    }

    #[cfg(test)]
    fn collect_active(&mut self) {
        let lists = &mut self.scratch.active_by_cell;
        lists.resize_with(self.window.len(), Vec::new);
        lists.iter_mut().for_each(Vec::clear);
        for (i, ue) in self.ues.iter().enumerate() {
            if ue.is_active() {
                lists[ue.serving_cell].push(i);
            }
        }
    }

    /// Processor-sharing service: each cell splits its resources equally among its active
    /// UEs, and resources a UE does not need to drain its backlog are redistributed.
    /// Expects the active lists built by `camp_and_spawn`.
    fn serve(&mut self, dt: f64) {
        let network = self.network.clone();
        let topo = &network.topology;
        let mut scratch = std::mem::take(&mut self.scratch);
        scratch.active_by_cell.resize_with(topo.cells.len(), Vec::new);

        for (cell, members) in scratch.active_by_cell.iter().enumerate() {
            if members.is_empty() {
                self.last_prb_util[cell] = 0.0;
                continue;
            }
            let bits_per_tick = topo.cells[cell].capacity * 1e6 * dt;
            scratch.need.clear();
            for &u in members {
                let eff = self.ue_efficiency(&self.ues[u]);
                let full_rate = bits_per_tick * eff;
                scratch.need.push((self.ues[u].backlog / full_rate, u, full_rate));
            }
            if scratch.need.len() > 1 {
                scratch
                    .need
                    .sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            }

            let mut remaining = 1.0;
            let mut left = scratch.need.len();
            let mut served_total = 0.0;
            let mut active_time = 0.0;
            for &(need, u, full_rate) in &scratch.need {
                let level = remaining / left as f64;
                let ue = &mut self.ues[u];
                if need <= level {
                    served_total += ue.backlog;
                    active_time += dt * need / level;
                    remaining -= need;
                    ue.backlog = 0.0;
                    ue.mode = UeMode::Idle;
                } else {
                    let served = level * full_rate;
                    served_total += served;
                    active_time += dt;
                    remaining -= level;
                    ue.backlog -= served;
                    if ue.backlog <= DRAIN_EPS_BITS {
                        ue.backlog = 0.0;
                        ue.mode = UeMode::Idle;
                    }
                }
                left -= 1;
            }
            let used = (1.0 - remaining).clamp(0.0, 1.0);
            let acc = &mut self.window[cell];
            acc.served_bits += served_total;
            acc.ue_active_seconds += active_time;
            acc.prb_seconds += used * dt;
            acc.active_count_seconds += members.len() as f64 * dt;
            self.last_prb_util[cell] = used;
        }
        self.scratch = scratch;
    }
}

/// Advances the simulation by one tick of `dt` seconds under `lb` and returns the window
/// statistics of every cell.
pub fn step_sim(state: &mut SimState, lb: &LbParams, dt: f64) -> Vec<CellStats> {
    state_advance(state, lb, dt);
    state.all_cell_stats()
}

/// Tick without materializing statistics; used by the hourly control loop.
pub fn state_advance(state: &mut SimState, lb: &LbParams, dt: f64) {
    assert!(dt > 0.0, "tick length must be positive");
    let before = state.ues.len();
    state.move_ues(dt);
    state.camp_and_spawn(dt);
    state.serve(dt);
    state.window_seconds += dt;
    state.clock += dt;
    let mut rng = state.lb_rng.clone();
    apply_iulb(state, lb, &mut rng);
    state.lb_rng = rng;
    apply_mlb(state, lb);
    debug_assert_eq!(before, state.ues.len());
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HourlyCellStats {
    pub hour: usize,
    pub cell_id: usize,
    pub x_i: f64,
    pub prb_util: f64,
    pub active: f64,
    pub idle: f64,
}

impl HourlyCellStats {
    pub fn from_stats(hour: usize, s: &CellStats) -> Self {
        Self {
            hour,
            cell_id: s.cell_id,
            x_i: s.x_i,
            prb_util: s.prb_util,
            active: s.active_ues,
            idle: s.idle_ues,
        }
    }
}

/// Writes `hour,cell_id,x_i,prb_util,active,idle` rows.
pub fn write_cell_stats_csv(path: &Path, rows: &[HourlyCellStats]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
