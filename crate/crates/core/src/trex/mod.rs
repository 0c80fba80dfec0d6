//! Reward learning from ranked demonstrations.

mod reward;
mod sampling;

pub use reward::*;
pub use sampling::*;

#[cfg(test)]
pub(crate) mod toy {
    use crate::env::{ActionVec, EnvState, Trajectory};
    use crate::kpi::KpiConfig;

    use super::DemoSet;

    /// Trajectory `k` has every cell throughput near `1 + k/2` Mbps, so quality grows with `k`.
    pub fn demos(m: usize, horizon: usize) -> DemoSet {
        let trajectories = (0..m)
            .map(|k| {
                let states = (0..horizon)
                    .map(|t| {
                        let base = 1.0 + 0.5 * k as f64;
                        let wiggle = 0.3 * ((t * 7 + k * 3) % 5) as f64 / 5.0;
                        let mut v = vec![3.0 + k as f64 * 0.1; 4];
                        v.extend([base + wiggle, base + 0.2, base + 0.4 - wiggle, base + 0.1]);
                        v.extend([0.5 - 0.02 * k as f64; 4]);
                        EnvState(v)
                    })
                    .collect();
                Trajectory {
                    scenario: 1,
                    seed: k as u64,
                    controller: "toy".into(),
                    states,
                    actions: vec![ActionVec(vec![0; 16]); horizon],
                }
            })
            .collect();
        DemoSet::new(trajectories, KpiConfig::default()).unwrap()
    }
}
