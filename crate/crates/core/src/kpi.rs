//! Sector throughput KPIs, the ranking function and trajectory ranking.

use serde::{Deserialize, Serialize};

use crate::env::{EnvState, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KpiConfig {
    /// Congestion threshold 𝕩, Mbps.
    pub congestion_threshold: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for KpiConfig {
    fn default() -> Self {
        Self {
            congestion_threshold: 1.0,
            alpha: 1.0,
            beta: 0.5,
            gamma: 1.0,
        }
    }
}

impl KpiConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.congestion_threshold > 0.0) {
            return Err(crate::Error::Config("congestion threshold must be positive".into()));
        }
        if ![self.alpha, self.beta, self.gamma].iter().all(|w| w.is_finite()) {
            return Err(crate::Error::Config("ranking weights must be finite".into()));
        }
        Ok(())
    }
}

/// Minimum throughput among the cells.
pub fn t_min(x: &[f64]) -> f64 {
    x.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Population standard deviation of the cell throughputs.
pub fn t_std(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Number of cells with throughput strictly below `threshold`.
pub fn t_cc(x: &[f64], threshold: f64) -> usize {
    x.iter().filter(|&&v| v < threshold).count()
}

/// `α·T_min − β·T_std − γ·T_cc` on the state's throughput components.
pub fn rank_reward(s: &EnvState, cfg: &KpiConfig) -> f64 {
    let ip = s.ip();
    cfg.alpha * t_min(ip) - cfg.beta * t_std(ip) - cfg.gamma * t_cc(ip, cfg.congestion_threshold) as f64
}

pub fn states_return(states: &[EnvState], cfg: &KpiConfig) -> f64 {
    states.iter().map(|s| rank_reward(s, cfg)).sum()
}

pub fn trajectory_return(t: &Trajectory, cfg: &KpiConfig) -> f64 {
    states_return(&t.states, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    /// Input indices from worst to best.
    pub order: Vec<usize>,
    /// Return of each input trajectory, indexed like the input.
    pub returns: Vec<f64>,
    /// Whether any two returns were equal.
    pub has_ties: bool,
}

/// Stable ascending sort of trajectories by return.
pub fn rank_demos(trajectories: &[Trajectory], cfg: &KpiConfig) -> Ranking {
    let returns: Vec<f64> = trajectories.iter().map(|t| trajectory_return(t, cfg)).collect();
    rank_returns(returns)
}

pub fn rank_returns(returns: Vec<f64>) -> Ranking {
    let mut order: Vec<usize> = (0..returns.len()).collect();
    order.sort_by(|&a, &b| returns[a].total_cmp(&returns[b]));
    let has_ties = order.windows(2).any(|w| returns[w[0]] == returns[w[1]]);
    Ranking {
        order,
        returns,
        has_ties,
    }
}

/// Pearson correlation. `None` when lengths differ, fewer than two points are given, or
/// either input is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some((cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorKpis {
    pub t_min: f64,
    pub t_std: f64,
    pub t_cc: f64,
}

impl SectorKpis {
    pub fn of(s: &EnvState, cfg: &KpiConfig) -> Self {
        let ip = s.ip();
        Self {
            t_min: t_min(ip),
            t_std: t_std(ip),
            t_cc: t_cc(ip, cfg.congestion_threshold) as f64,
        }
    }
}
