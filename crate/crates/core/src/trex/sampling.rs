use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvState, Trajectory};
use crate::kpi::{rank_returns, rank_reward, KpiConfig, Ranking};
use crate::{Error, Result};

/// Fraction of the ranked demonstrations (worst first) used for training.
pub const TRAIN_FRACTION: f64 = 0.7;

/// Ranked demonstrations split into a training partition (worst 70%) and an
/// extrapolation partition (best 30%).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoSet {
    pub trajectories: Vec<Trajectory>,
    pub ranking: Ranking,
    /// `rank[i]` is the position of trajectory `i` in the ascending order.
    pub rank: Vec<usize>,
    pub kpi: KpiConfig,
}

impl DemoSet {
    pub fn new(trajectories: Vec<Trajectory>, kpi: KpiConfig) -> Result<Self> {
        if trajectories.len() < 2 {
            return Err(Error::Config("a demo set needs at least two trajectories".into()));
        }
        let horizon = trajectories[0].len();
        if horizon == 0 || trajectories.iter().any(|t| t.len() != horizon) {
            return Err(Error::Config("demo trajectories must share a non-zero horizon".into()));
        }
        let returns = trajectories
            .iter()
            .map(|t| t.states.iter().map(|s| rank_reward(s, &kpi)).sum())
            .collect();
        let ranking = rank_returns(returns);
        let mut rank = vec![0; trajectories.len()];
        for (pos, &i) in ranking.order.iter().enumerate() {
            rank[i] = pos;
        }
        Ok(Self {
            trajectories,
            ranking,
            rank,
            kpi,
        })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.trajectories[0].len()
    }

    pub fn train_cutoff(&self) -> usize {
        (TRAIN_FRACTION * self.len() as f64).floor() as usize
    }

    /// Trajectory indices of the training partition, worst first.
    pub fn train(&self) -> &[usize] {
        &self.ranking.order[..self.train_cutoff()]
    }

    /// Trajectory indices of the extrapolation partition, worst first.
    pub fn extrapolation(&self) -> &[usize] {
        &self.ranking.order[self.train_cutoff()..]
    }

    pub fn all(&self) -> &[usize] {
        &self.ranking.order
    }

    pub fn returns(&self) -> &[f64] {
        &self.ranking.returns
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Tcs,
    Contiguous,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Tcs => "tcs",
            SamplerKind::Contiguous => "contiguous",
        }
    }
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tcs" => Ok(SamplerKind::Tcs),
            "contiguous" => Ok(SamplerKind::Contiguous),
            other => Err(Error::Config(format!("unknown sampler '{other}'"))),
        }
    }
}

impl std::fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Two equal-length sub-trajectories referenced by trajectory index and state indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub traj_a: usize,
    pub traj_b: usize,
    pub idx_a: Vec<usize>,
    pub idx_b: Vec<usize>,
    /// 0 when A's source trajectory ranks higher, 1 otherwise.
    pub label: u8,
}

impl PreferencePair {
    pub fn len(&self) -> usize {
        self.idx_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idx_a.is_empty()
    }

    pub fn states_a<'a>(&'a self, demos: &'a DemoSet) -> impl Iterator<Item = &'a EnvState> + 'a {
        let t = &demos.trajectories[self.traj_a];
        self.idx_a.iter().map(move |&i| &t.states[i])
    }

    pub fn states_b<'a>(&'a self, demos: &'a DemoSet) -> impl Iterator<Item = &'a EnvState> + 'a {
        let t = &demos.trajectories[self.traj_b];
        self.idx_b.iter().map(move |&i| &t.states[i])
    }

    /// (worse, better) sides of the pair as (trajectory, indices).
    pub fn ordered(&self) -> ((usize, &[usize]), (usize, &[usize])) {
        let a = (self.traj_a, self.idx_a.as_slice());
        let b = (self.traj_b, self.idx_b.as_slice());
        if self.label == 0 {
            (b, a)
        } else {
            (a, b)
        }
    }
}

/// Draws a pair of distinct trajectories from `pool` with distinct returns.
fn draw_trajectories<R: Rng>(demos: &DemoSet, pool: &[usize], rng: &mut R) -> (usize, usize) {
    loop {
        let x = pool[rng.random_range(0..pool.len())];
        let y = pool[rng.random_range(0..pool.len())];
        if x != y && demos.ranking.returns[x] != demos.ranking.returns[y] {
            return (x, y);
        }
    }
}

fn check_request(demos: &DemoSet, pool: &[usize], l: usize) -> Result<()> {
    if l == 0 || l > demos.horizon() {
        return Err(Error::Config(format!(
            "sub-trajectory length {l} outside 1..={}",
            demos.horizon()
        )));
    }
    let first = pool.first().map(|&i| demos.ranking.returns[i]);
    if pool.len() < 2 || pool.iter().all(|&i| Some(demos.ranking.returns[i]) == first) {
        return Err(Error::Config(
            "sampling needs at least two trajectories with distinct returns".into(),
        ));
    }
    Ok(())
}

fn label(demos: &DemoSet, x: usize, y: usize) -> u8 {
    if demos.rank[x] > demos.rank[y] {
        0
    } else {
        1
    }
}

/// A uniformly random set of `l` distinct time indices in `0..horizon`, ascending.
pub fn tcs_index_set<R: Rng>(rng: &mut R, horizon: usize, l: usize) -> Vec<usize> {
    let mut idx = index::sample(rng, horizon, l).into_vec();
    idx.sort_unstable();
    idx
}

/// Two independent uniform start offsets in `0..=horizon - l`.
pub fn contiguous_offsets<R: Rng>(rng: &mut R, horizon: usize, l: usize) -> (usize, usize) {
    let max_start = horizon - l;
    (rng.random_range(0..=max_start), rng.random_range(0..=max_start))
}

/// Temporally consistent sampling: both sub-trajectories are sliced at one random set of `l`
/// time indices.
pub fn tcs_sample(demos: &DemoSet, pool: &[usize], count: usize, l: usize, seed: u64) -> Result<Vec<PreferencePair>> {
    check_request(demos, pool, l)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = demos.horizon();
    Ok((0..count)
        .map(|_| {
            let (x, y) = draw_trajectories(demos, pool, &mut rng);
            let idx = tcs_index_set(&mut rng, horizon, l);
            PreferencePair {
                traj_a: x,
                traj_b: y,
                idx_a: idx.clone(),
                idx_b: idx,
                label: label(demos, x, y),
            }
        })
        .collect())
}

/// Baseline sampling: each side is a block of `l` consecutive states starting at an
/// independent uniform offset.
pub fn contiguous_sample(
    demos: &DemoSet,
    pool: &[usize],
    count: usize,
    l: usize,
    seed: u64,
) -> Result<Vec<PreferencePair>> {
    check_request(demos, pool, l)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = demos.horizon();
    Ok((0..count)
        .map(|_| {
            let (x, y) = draw_trajectories(demos, pool, &mut rng);
            let (sa, sb) = contiguous_offsets(&mut rng, horizon, l);
            PreferencePair {
                traj_a: x,
                traj_b: y,
                idx_a: (sa..sa + l).collect(),
                idx_b: (sb..sb + l).collect(),
                label: label(demos, x, y),
            }
        })
        .collect())
}

pub fn sample_pairs(
    kind: SamplerKind,
    demos: &DemoSet,
    pool: &[usize],
    count: usize,
    l: usize,
    seed: u64,
) -> Result<Vec<PreferencePair>> {
    match kind {
        SamplerKind::Tcs => tcs_sample(demos, pool, count, l, seed),
        SamplerKind::Contiguous => contiguous_sample(demos, pool, count, l, seed),
    }
}

/// Whether the ranking-function returns of the two sub-trajectories contradict the label.
pub fn is_mislabeled(demos: &DemoSet, pair: &PreferencePair, cfg: &KpiConfig) -> bool {
    let ra: f64 = pair.states_a(demos).map(|s| rank_reward(s, cfg)).sum();
    let rb: f64 = pair.states_b(demos).map(|s| rank_reward(s, cfg)).sum();
    if pair.label == 0 {
        ra < rb
    } else {
        rb < ra
    }
}

/// Fraction of pairs whose sub-trajectory ordering contradicts the full-trajectory label.
pub fn mislabel_rate(demos: &DemoSet, pairs: &[PreferencePair], cfg: &KpiConfig) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Config("mislabel rate of an empty pair set".into()));
    }
    let bad = pairs.iter().filter(|p| is_mislabeled(demos, p, cfg)).count();
    Ok(bad as f64 / pairs.len() as f64)
}
