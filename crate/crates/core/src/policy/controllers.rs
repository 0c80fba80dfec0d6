use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{ActionSpace, ActionVec, Controller, EnvState};
use crate::lb::IULB_WEIGHT_MAX;
use crate::{Error, Result};

/// Uniform sample over the action box at every step.
#[derive(Debug, Clone)]
pub struct RandomController {
    space: ActionSpace,
    rng: ChaCha8Rng,
}

impl RandomController {
    pub fn new(space: ActionSpace, seed: u64) -> Self {
        Self {
            space,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn sample(&mut self) -> ActionVec {
        ActionVec(
            (0..self.space.len())
                .map(|i| {
                    let (lo, hi) = self.space.bounds(i);
                    self.rng.random_range(lo..=hi)
                })
                .collect(),
        )
    }
}

impl Controller for RandomController {
    fn name(&self) -> String {
        "random".into()
    }

    fn act(&mut self, _: &EnvState) -> ActionVec {
        self.sample()
    }
}

/// The same action at every step.
#[derive(Debug, Clone)]
pub struct FixedController {
    action: ActionVec,
}

impl FixedController {
    pub fn new(space: ActionSpace, action: ActionVec) -> Result<Self> {
        if !space.contains(&action) {
            return Err(Error::Config(format!(
                "fixed action {:?} is outside the action box",
                action.0
            )));
        }
        Ok(Self { action })
    }

    /// All IULB weights 5, all MLB offsets 0.
    pub fn neutral(space: ActionSpace) -> Self {
        Self {
            action: space.neutral(),
        }
    }
}

impl Controller for FixedController {
    fn name(&self) -> String {
        "fixed".into()
    }

    fn act(&mut self, _: &EnvState) -> ActionVec {
        self.action.clone()
    }
}

/// Load-difference rule: IULB weights follow the PRB imbalance, and MLB source triggers drift
/// one step per hour towards offloading the worst-served cell.
#[derive(Debug, Clone)]
pub struct AdaptiveController {
    space: ActionSpace,
    gain: f64,
    source_offsets: Vec<i32>,
}

impl AdaptiveController {
    pub fn new(space: ActionSpace, gain: f64) -> Result<Self> {
        if !(gain > 0.0 && gain.is_finite()) {
            return Err(Error::Config(format!("adaptive gain must be positive, got {gain}")));
        }
        Ok(Self {
            space,
            gain,
            source_offsets: vec![0; space.cells],
        })
    }
}

impl Controller for AdaptiveController {
    fn name(&self) -> String {
        "adaptive".into()
    }

    fn act(&mut self, state: &EnvState) -> ActionVec {
        let n = self.space.cells;
        let mut action = self.space.neutral();
        let prb = state.prb();
        let mean = prb.iter().sum::<f64>() / n as f64;
        let neutral_weight = action.0[0];
        for (i, p) in prb.iter().enumerate() {
            let delta = (self.gain * (mean - p)).round() as i32;
            action.0[i] = (neutral_weight + delta).clamp(0, IULB_WEIGHT_MAX);
        }
        let ip = state.ip();
        let lo = ip.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ip.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            for (i, x) in ip.iter().enumerate() {
                let (min_off, max_off) = self.space.bounds(n + i);
                if *x == lo {
                    self.source_offsets[i] = (self.source_offsets[i] - 1).max(min_off);
                } else if *x == hi {
                    self.source_offsets[i] = (self.source_offsets[i] + 1).min(max_off);
                }
            }
        }
        action.0[n..2 * n].copy_from_slice(&self.source_offsets);
        action
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(prb: [f64; 4], ip: [f64; 4]) -> EnvState {
        let mut v = vec![3.0; 4];
        v.extend(ip);
        v.extend(prb);
        EnvState(v)
    }

    #[test]
    fn random_actions_in_bounds_and_reproducible() {
        let space = ActionSpace::new(4);
        let mut a = RandomController::new(space, 9);
        let mut b = RandomController::new(space, 9);
        for _ in 0..500 {
            let x = a.sample();
            assert!(space.contains(&x));
            assert_eq!(x, b.sample());
        }
    }

    #[test]
    fn random_components_are_uniform() {
        let space = ActionSpace::new(4);
        let mut c = RandomController::new(space, 2024);
        let draws = 10_000;
        let mut counts: Vec<Vec<usize>> = space.cardinalities().iter().map(|&k| vec![0; k]).collect();
        for _ in 0..draws {
            for (i, v) in c.sample().0.iter().enumerate() {
                counts[i][(v - space.bounds(i).0) as usize] += 1;
            }
        }
        for (i, row) in counts.iter().enumerate() {
            let p = 1.0 / row.len() as f64;
            let expected = draws as f64 * p;
            let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
            for &k in row {
                assert!(
                    (k as f64 - expected).abs() < 3.0 * sigma + 1.0,
                    "component {i}: {row:?}"
                );
            }
        }
    }

    #[test]
    fn fixed_rejects_out_of_box() {
        let space = ActionSpace::new(4);
        let mut bad = space.neutral();
        bad.0[0] = 11;
        assert!(FixedController::new(space, bad).is_err());
        let mut f = FixedController::neutral(space);
        assert_eq!(f.act(&state([0.1; 4], [1.0; 4])), space.neutral());
    }

    #[test]
    fn adaptive_balanced_state_is_neutral() {
        let space = ActionSpace::new(4);
        let mut c = AdaptiveController::new(space, 10.0).unwrap();
        for _ in 0..3 {
            assert_eq!(c.act(&state([0.4; 4], [2.0; 4])), space.neutral());
        }
    }

    #[test]
    fn adaptive_overloaded_cell_loses_weight() {
        let space = ActionSpace::new(4);
        let mut c = AdaptiveController::new(space, 10.0).unwrap();
        let a = c.act(&state([0.9, 0.3, 0.3, 0.3], [1.0, 3.0, 3.0, 4.0]));
        assert!(a.0[0] < 5);
        assert!(a.0[1..4].iter().all(|&w| w > 5));
        assert_eq!(&a.0[4..8], &[-1, 0, 0, 1]);
        assert!(space.contains(&a));
        assert!(AdaptiveController::new(space, 0.0).is_err());
    }

    #[test]
    fn adaptive_offsets_saturate_at_bounds() {
        let space = ActionSpace::new(4);
        let mut c = AdaptiveController::new(space, 1000.0).unwrap();
        let s = state([1.0, 0.0, 0.0, 0.0], [0.5, 2.0, 2.0, 6.0]);
        let mut a = c.act(&s);
        for _ in 0..20 {
            a = c.act(&s);
            assert!(space.contains(&a));
        }
        assert_eq!(a.0[0], 0);
        assert_eq!(a.0[4], -6);
        assert_eq!(a.0[7], 6);
    }
}
