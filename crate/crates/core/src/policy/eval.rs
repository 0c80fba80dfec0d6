use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{rollout, Controller, Env, EnvConfig, Trajectory};
use crate::kpi::{KpiConfig, SectorKpis};
use crate::pipeline::io::csv_writer;
use crate::sim::{Network, TrafficScenario};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HourKpis {
    pub hour: usize,
    pub t_min: f64,
    pub t_std: f64,
    pub t_cc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and population standard deviation.
    pub fn of(x: &[f64]) -> Self {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        Self { mean, std }
    }
}

/// Sector KPIs of one controller, averaged over evaluation runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    pub controller: String,
    pub scenario: u32,
    pub seeds: Vec<u64>,
    /// Per-hour KPIs averaged over runs.
    pub hourly: Vec<HourKpis>,
    /// Mean and standard deviation over every (run, hour) sample.
    pub t_min: MeanStd,
    pub t_std: MeanStd,
    pub t_cc: MeanStd,
}

impl KpiReport {
    pub fn from_trajectories(controller: &str, trajectories: &[Trajectory], kpi: &KpiConfig) -> Result<Self> {
        let first = trajectories
            .first()
            .ok_or_else(|| Error::Config("kpi report of zero trajectories".into()))?;
        let horizon = first.len();
        if horizon == 0 || trajectories.iter().any(|t| t.len() != horizon) {
            return Err(Error::Config(
                "report trajectories must share a non-zero horizon".into(),
            ));
        }
        let runs = trajectories.len() as f64;
        let mut hourly: Vec<HourKpis> = (0..horizon)
            .map(|hour| HourKpis {
                hour,
                t_min: 0.0,
                t_std: 0.0,
                t_cc: 0.0,
            })
            .collect();
        let (mut mins, mut stds, mut ccs) = (Vec::new(), Vec::new(), Vec::new());
        for t in trajectories {
            for (h, s) in t.states.iter().enumerate() {
                let k = SectorKpis::of(s, kpi);
                hourly[h].t_min += k.t_min / runs;
                hourly[h].t_std += k.t_std / runs;
                hourly[h].t_cc += k.t_cc / runs;
                mins.push(k.t_min);
                stds.push(k.t_std);
                ccs.push(k.t_cc);
            }
        }
        Ok(Self {
            controller: controller.to_string(),
            scenario: first.scenario,
            seeds: trajectories.iter().map(|t| t.seed).collect(),
            hourly,
            t_min: MeanStd::of(&mins),
            t_std: MeanStd::of(&stds),
            t_cc: MeanStd::of(&ccs),
        })
    }

    /// `hour,t_min,t_std,t_cc` rows followed by `mean` and `std` summary rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        let err = |e| Error::csv(path, e);
        w.write_record(["hour", "t_min", "t_std", "t_cc"]).map_err(err)?;
        for h in &self.hourly {
            w.write_record([
                h.hour.to_string(),
                h.t_min.to_string(),
                h.t_std.to_string(),
                h.t_cc.to_string(),
            ])
            .map_err(err)?;
        }
        w.write_record([
            "mean".to_string(),
            self.t_min.mean.to_string(),
            self.t_std.mean.to_string(),
            self.t_cc.mean.to_string(),
        ])
        .map_err(err)?;
        w.write_record([
            "std".to_string(),
            self.t_min.std.to_string(),
            self.t_std.std.to_string(),
            self.t_cc.std.to_string(),
        ])
        .map_err(err)?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Rolls out a fresh controller from `make(seed)` on every seed and reports its KPIs.
pub fn evaluate_controller(
    make: &mut dyn FnMut(u64) -> Box<dyn Controller>,
    network: Arc<Network>,
    env_cfg: &EnvConfig,
    scenario: &TrafficScenario,
    seeds: &[u64],
    kpi: &KpiConfig,
) -> Result<(KpiReport, Vec<Trajectory>)> {
    let mut env = Env::with_network(network, env_cfg.clone())?;
    let mut trajectories = Vec::with_capacity(seeds.len());
    let mut name = String::new();
    for &seed in seeds {
        let mut controller = make(seed);
        name = controller.name();
        trajectories.push(rollout(&mut env, controller.as_mut(), scenario, seed, env_cfg.horizon)?);
    }
    let report = KpiReport::from_trajectories(&name, &trajectories, kpi)?;
    Ok((report, trajectories))
}
