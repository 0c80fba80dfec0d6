//! Idle-mode UE load balancing (IULB) and mobility load balancing (MLB).
//!
//! Both mechanisms act per sector and only between the co-located carrier cells of that
//! sector. IULB probabilistically re-camps idle UEs away from loaded cells; MLB hands active UEs
//! over from a cell whose windowed IP throughput fell below its trigger.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::sim::SimState;

pub const IULB_WEIGHT_MAX: i32 = 10;
pub const MLB_OFFSET_MIN: i32 = -6;
pub const MLB_OFFSET_MAX: i32 = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IulbParams {
    /// Reselection weight per cell of the sector, in `[0, 10]`.
    pub weights: Vec<i32>,
    /// A cell redistributes its idle UEs while its PRB utilization exceeds this fraction.
    pub load_trigger: f64,
}

/// Per-cell MLB offsets, each in `[-6, 6]`. Larger values are stricter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlbParams {
    pub source_trigger_offset: Vec<i32>,
    pub target_admit_offset: Vec<i32>,
    pub ho_quality_offset: Vec<i32>,
}

impl MlbParams {
    pub fn neutral(cells: usize) -> Self {
        Self {
            source_trigger_offset: vec![0; cells],
            target_admit_offset: vec![0; cells],
            ho_quality_offset: vec![0; cells],
        }
    }

    pub fn uniform(cells: usize, offset: i32) -> Self {
        Self {
            source_trigger_offset: vec![offset; cells],
            target_admit_offset: vec![offset; cells],
            ho_quality_offset: vec![offset; cells],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorLb {
    pub iulb: IulbParams,
    pub mlb: MlbParams,
}

/// Load-balancing parameters for every sector of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbParams {
    pub sectors: Vec<SectorLb>,
}

impl LbParams {
    pub fn uniform(sector_count: usize, sector: SectorLb) -> Self {
        Self {
            sectors: vec![sector; sector_count],
        }
    }
}

/// Physical interpretation of the integer MLB offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlbConfig {
    /// Throughput trigger at offset 0, Mbps. `None` = 20th percentile of the cells'
    /// unloaded (single unit-efficiency UE) throughput.
    pub base_trigger_mbps: Option<f64>,
    /// One offset unit as a fraction of the base trigger.
    pub offset_step: f64,
    /// Minimum target-minus-source signal delta at offset 0, dB.
    pub quality_base_db: f64,
    pub quality_step_db: f64,
}

impl Default for MlbConfig {
    fn default() -> Self {
        Self {
            base_trigger_mbps: None,
            offset_step: 0.05,
            quality_base_db: -3.0,
            quality_step_db: 1.0,
        }
    }
}

/// Resolved MLB thresholds for one source cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlbThresholds {
    pub source_trigger: f64,
    pub admit_margin: f64,
    pub min_quality_delta: f64,
}

impl MlbConfig {
    pub fn thresholds(&self, base: f64, params: &MlbParams, cell: usize) -> MlbThresholds {
        let step = self.offset_step * base;
        MlbThresholds {
            source_trigger: base - step * params.source_trigger_offset[cell] as f64,
            admit_margin: step * params.target_admit_offset[cell] as f64,
            min_quality_delta: self.quality_base_db + self.quality_step_db * params.ho_quality_offset[cell] as f64,
        }
    }
}

/// Reselection distribution over the sector's cells. `None` when all weights are zero.
pub fn reselection_probabilities(weights: &[i32]) -> Option<Vec<f64>> {
    let total: i32 = weights.iter().map(|w| (*w).max(0)).sum();
    if total <= 0 {
        return None;
    }
    Some(weights.iter().map(|w| (*w).max(0) as f64 / total as f64).collect())
}

/// Samples an index from non-negative integer weights with positive sum.
fn sample_weighted<R: Rng>(weights: &[i32], total: i32, rng: &mut R) -> usize {
    let mut pick = rng.random_range(0..total);
    for (i, w) in weights.iter().enumerate() {
        let w = (*w).max(0);
        if pick < w {
            return i;
        }
        pick -= w;
    }
    unreachable!("weights sum checked positive")
}

/// Idle-mode reselection. For every cell whose last-tick PRB utilization exceeds the sector's
/// `load_trigger`, each idle UE camped there draws a new cell of the same sector with
/// probability proportional to the IULB weights (its own cell included). Returns the number
/// of UEs that changed cell.
pub fn apply_iulb<R: Rng>(state: &mut SimState, params: &LbParams, rng: &mut R) -> usize {
    let topo = &state.network.topology;
    let n_c = topo.cells_per_sector;
    let triggered: Vec<bool> = state
        .last_prb_util
        .iter()
        .enumerate()
        .map(|(cell, util)| {
            let sector = &params.sectors[cell / n_c].iulb;
            *util > sector.load_trigger
        })
        .collect();
    if !triggered.iter().any(|t| *t) {
        return 0;
    }
    let totals: Vec<i32> = params
        .sectors
        .iter()
        .map(|s| s.iulb.weights.iter().map(|w| (*w).max(0)).sum())
        .collect();

    let mut moved = 0;
    for ue in state.ues.iter_mut() {
        if ue.is_active() || !triggered[ue.serving_cell] {
            continue;
        }
        let sector = ue.serving_cell / n_c;
        if totals[sector] <= 0 {
            continue;
        }
        let carrier = sample_weighted(&params.sectors[sector].iulb.weights, totals[sector], rng);
        let target = sector * n_c + carrier;
        if target != ue.serving_cell {
            ue.serving_cell = target;
            ue.carrier = carrier;
            moved += 1;
            state.counters.reselections_per_sector[sector] += 1;
        }
    }
    state.counters.reselections += moved as u64;
    moved
}

/// A handover candidate: one target cell for one UE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetCandidate {
    pub cell: usize,
    /// Target signal minus source signal, dB.
    pub quality_delta: f64,
    /// Target signal (dB) plus the target's throughput estimate (Mbps).
    pub score: f64,
    /// Current throughput estimate of the target, Mbps.
    pub throughput: f64,
}

/// Chooses the best-scoring eligible target. Ties go to the lower cell id.
pub fn select_target(
    candidates: &[TargetCandidate],
    source_throughput: f64,
    thresholds: &MlbThresholds,
) -> Option<TargetCandidate> {
    candidates
        .iter()
        .filter(|c| {
            c.throughput > source_throughput + thresholds.admit_margin && c.quality_delta > thresholds.min_quality_delta
        })
        .fold(None, |best: Option<TargetCandidate>, c| match best {
            Some(b) if b.score > c.score || (b.score == c.score && b.cell < c.cell) => Some(b),
            _ => Some(*c),
        })
}

/// Mobility load balancing over every sector. Deterministic given the state.
/// Returns the number of handovers performed.
pub fn apply_mlb(state: &mut SimState, params: &LbParams) -> usize {
    let network = state.network.clone();
    let topo = &network.topology;
    let n_c = topo.cells_per_sector;
    let base = network.mlb_base_trigger;

    let triggered = |sector: usize, c: usize| {
        let th = network.mlb.thresholds(base, &params.sectors[sector].mlb, c);
        state.throughput_estimate(sector * n_c + c) < th.source_trigger
    };
    let mut triggered_sectors = Vec::new();
    for sector in 0..params.sectors.len() {
        if (0..n_c).any(|c| triggered(sector, c)) {
            triggered_sectors.push(sector);
        }
    }
    if triggered_sectors.is_empty() {
        return 0;
    }
    let active_by_cell = state.take_active_lists();

    let mut handovers = 0;
    let mut signals = vec![0.0; n_c];
    let mut candidates = Vec::with_capacity(n_c);
    let mut ranked: Vec<(f64, usize)> = Vec::new();
    let mut throughput = vec![0.0; n_c];
    let mut n_active = vec![0usize; n_c];
    for sector in triggered_sectors {
        let sector_params = &params.sectors[sector];
        for c in 0..n_c {
            throughput[c] = state.throughput_estimate(sector * n_c + c);
            n_active[c] = active_by_cell[sector * n_c + c].len();
        }

        for src in 0..n_c {
            let th = network.mlb.thresholds(base, &sector_params.mlb, src);
            if n_active[src] == 0 || throughput[src] >= th.source_trigger {
                continue;
            }
            // Rank UEs by their best target's score.
            ranked.clear();
            for &u in &active_by_cell[sector * n_c + src] {
                state.ue_sector_signals(u, sector, &mut signals);
                fill_candidates(&mut candidates, sector, src, &signals, &throughput);
                if let Some(t) = select_target(&candidates, throughput[src], &th) {
                    ranked.push((t.score, u));
                }
            }
            ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

            for &(_, u) in &ranked {
                if throughput[src] >= th.source_trigger || n_active[src] <= 1 {
                    break;
                }
                state.ue_sector_signals(u, sector, &mut signals);
                fill_candidates(&mut candidates, sector, src, &signals, &throughput);
                let Some(target) = select_target(&candidates, throughput[src], &th) else {
                    continue;
                };
                let dst = target.cell - sector * n_c;
                let ue = &mut state.ues[u];
                ue.serving_cell = target.cell;
                ue.carrier = dst;
                handovers += 1;
                state.counters.handovers_per_sector[sector] += 1;
                // Equal-share projection of the per-UE throughput after the move.
                throughput[src] *= n_active[src] as f64 / (n_active[src] - 1) as f64;
                n_active[src] -= 1;
                if n_active[dst] > 0 {
                    throughput[dst] *= n_active[dst] as f64 / (n_active[dst] + 1) as f64;
                }
                n_active[dst] += 1;
            }
        }
    }
    state.counters.handovers += handovers as u64;
    state.restore_active_lists(active_by_cell);
    handovers
}

fn fill_candidates(out: &mut Vec<TargetCandidate>, sector: usize, src: usize, signals: &[f64], throughput: &[f64]) {
    let n_c = signals.len();
    out.clear();
    out.extend((0..n_c).filter(|&c| c != src).map(|c| TargetCandidate {
        cell: sector * n_c + c,
        quality_delta: signals[c] - signals[src],
        score: signals[c] + throughput[c],
        throughput: throughput[c],
    }));
}
