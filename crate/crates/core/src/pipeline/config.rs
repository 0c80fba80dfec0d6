use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{ActionVec, EnvConfig};
use crate::kpi::KpiConfig;
use crate::policy::PpoConfig;
use crate::sim::TrafficScenario;
use crate::trex::{RewardTrainConfig, SamplerKind};
use crate::{Error, Result};

/// Methods compared by the evaluation stage.
pub const ALL_METHODS: [&str; 5] = ["ours", "fixed", "adaptive", "demos", "trex-contiguous"];

/// Everything a pipeline run depends on. Missing JSON fields take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenarios: Vec<u32>,
    /// Replace the built-in scenario with the same id.
    pub custom_scenarios: Vec<TrafficScenario>,
    /// Seed for reward and policy training.
    pub seed: u64,
    pub sampler: SamplerKind,
    pub demo_count: usize,
    /// Demonstration `i` is simulated with environment seed `demo_seed_base + i`.
    pub demo_seed_base: u64,
    pub env: EnvConfig,
    pub kpi: KpiConfig,
    pub reward: RewardTrainConfig,
    pub ppo: PpoConfig,
    pub eval_seeds: Vec<u64>,
    pub methods: Vec<String>,
    pub adaptive_gain: f64,
    /// Constant action of the fixed-rule baseline. `None` = neutral.
    pub fixed_action: Option<ActionVec>,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenarios: vec![1, 2],
            custom_scenarios: Vec::new(),
            seed: 0,
            sampler: SamplerKind::Tcs,
            demo_count: 100,
            demo_seed_base: 0,
            env: EnvConfig::default(),
            kpi: KpiConfig::default(),
            reward: RewardTrainConfig::default(),
            ppo: PpoConfig::default(),
            eval_seeds: vec![5000, 5001, 5002],
            methods: ALL_METHODS.iter().map(|m| m.to_string()).collect(),
            adaptive_gain: 10.0,
            fixed_action: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::Config("at least one scenario is required".into()));
        }
        for &id in &self.scenarios {
            self.scenario(id)?.validate()?;
        }
        if self.demo_count < 2 {
            return Err(Error::Config("demo_count must be at least 2".into()));
        }
        if self.env.horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if self.eval_seeds.is_empty() {
            return Err(Error::Config("eval_seeds must not be empty".into()));
        }
        if let Some(m) = self.methods.iter().find(|m| !ALL_METHODS.contains(&m.as_str())) {
            return Err(Error::Config(format!(
                "unknown method '{m}', expected one of {ALL_METHODS:?}"
            )));
        }
        if !(self.adaptive_gain > 0.0) {
            return Err(Error::Config("adaptive_gain must be positive".into()));
        }
        self.kpi.validate()?;
        self.reward.validate()?;
        self.ppo.validate()
    }

    pub fn scenario(&self, id: u32) -> Result<TrafficScenario> {
        match self.custom_scenarios.iter().find(|s| s.id == id) {
            Some(s) => Ok(s.clone()),
            None => TrafficScenario::builtin(id),
        }
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn scenario_dir(&self, id: u32) -> PathBuf {
        self.out_dir.join(format!("s{id}"))
    }

    pub fn demos_dir(&self, id: u32) -> PathBuf {
        self.scenario_dir(id).join("demos")
    }

    pub fn reward_dir(&self, id: u32, sampler: SamplerKind, seed: u64) -> PathBuf {
        self.scenario_dir(id)
            .join("reward")
            .join(format!("{sampler}_seed{seed}"))
    }

    pub fn policy_dir(&self, id: u32, sampler: SamplerKind, seed: u64) -> PathBuf {
        self.scenario_dir(id)
            .join("policy")
            .join(format!("{sampler}_seed{seed}"))
    }

    pub fn eval_dir(&self, id: u32) -> PathBuf {
        self.scenario_dir(id).join("eval")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.out_dir.join("report")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_validates_and_round_trips() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn partial_json_takes_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"scenarios": [3], "seed": 9}"#).unwrap();
        assert_eq!(c.scenarios, vec![3]);
        assert_eq!(c.demo_count, 100);
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn hash_ignores_out_dir_only() {
        let a = RunConfig::default();
        let b = RunConfig {
            out_dir: "elsewhere".into(),
            ..a.clone()
        };
        let c = RunConfig { seed: 1, ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for c in [
            RunConfig {
                scenarios: vec![],
                ..Default::default()
            },
            RunConfig {
                scenarios: vec![8],
                ..Default::default()
            },
            RunConfig {
                demo_count: 1,
                ..Default::default()
            },
            RunConfig {
                methods: vec!["oracle".into()],
                ..Default::default()
            },
        ] {
            assert!(matches!(c.validate(), Err(Error::Config(_))));
        }
    }
}
