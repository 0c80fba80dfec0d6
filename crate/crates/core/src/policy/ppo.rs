use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{ActionSpace, ActionVec, Controller, Env, EnvConfig, EnvState};
use crate::kpi::{rank_reward, KpiConfig};
use crate::nn::{clip_grad_norm, Activation, Adam, AdamConfig, Mlp};
use crate::pipeline::io::{csv_writer, read_json, write_json};
use crate::sim::{Network, TrafficScenario};
use crate::trex::{RewardModel, Standardizer};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub total_timesteps: usize,
    pub n_steps: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_range: f64,
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub max_grad_norm: f64,
    pub hidden: Vec<usize>,
    /// Hours per training episode.
    pub episode_len: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            total_timesteps: 50_000,
            n_steps: 2048,
            batch_size: 64,
            epochs: 10,
            lr: 3e-4,
            weight_decay: 1e-4,
            gamma: 0.97,
            gae_lambda: 0.95,
            clip_range: 0.15,
            ent_coef: 0.01,
            vf_coef: 0.5,
            max_grad_norm: 0.5,
            hidden: vec![256, 256],
            episode_len: crate::env::DEFAULT_HORIZON,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if !(self.clip_range > 0.0) {
            return Err(Error::Config(format!(
                "clip range must be positive, got {}",
                self.clip_range
            )));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::Config(format!(
                "gae_lambda must lie in [0, 1], got {}",
                self.gae_lambda
            )));
        }
        if self.n_steps == 0 || self.batch_size == 0 || self.episode_len == 0 {
            return Err(Error::Config(
                "n_steps, batch_size and episode_len must be positive".into(),
            ));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) || !(self.max_grad_norm > 0.0) {
            return Err(Error::Config(
                "lr and max_grad_norm must be > 0, weight decay ≥ 0".into(),
            ));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config(
                "policy hidden layers must be non-empty and positive".into(),
            ));
        }
        Ok(())
    }
}

fn log_softmax(z: &[f64], out: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    for (o, v) in out.iter_mut().zip(z) {
        *o = v - lse;
    }
}

/// Factorized categorical policy over the integer action box plus a state-value critic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub standardizer: Standardizer,
    pub actor: Mlp,
    pub critic: Mlp,
    /// Number of categories of each head.
    pub heads: Vec<usize>,
    /// Action value of category 0 of each head.
    pub lows: Vec<i32>,
}

/// One sampled decision.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyStep {
    pub action: ActionVec,
    pub indices: Vec<usize>,
    pub log_prob: f64,
    pub value: f64,
}

impl ActorCritic {
    pub fn new(standardizer: Standardizer, space: ActionSpace, hidden: &[usize], seed: u64) -> Result<Self> {
        let lows = (0..space.len()).map(|i| space.bounds(i).0).collect();
        Self::with_heads(standardizer, space.cardinalities(), lows, hidden, seed)
    }

    pub fn with_heads(
        standardizer: Standardizer,
        heads: Vec<usize>,
        lows: Vec<i32>,
        hidden: &[usize],
        seed: u64,
    ) -> Result<Self> {
        if heads.is_empty() || heads.contains(&0) || lows.len() != heads.len() {
            return Err(Error::Config("every policy head needs at least one category".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = standardizer.dim();
        let mut acts = vec![Activation::Tanh; hidden.len()];
        acts.push(Activation::Identity);
        let mut sizes = vec![dim];
        sizes.extend_from_slice(hidden);
        sizes.push(heads.iter().sum());
        let mut actor = Mlp::init(&sizes, &acts, &mut rng)?;
        actor.scale_layer(hidden.len(), 0.01);
        *sizes.last_mut().expect("non-empty") = 1;
        let critic = Mlp::init(&sizes, &acts, &mut rng)?;
        Ok(Self {
            standardizer,
            actor,
            critic,
            heads,
            lows,
        })
    }

    pub fn head_count(&self) -> usize {
        self.heads.len()
    }

    pub fn observe(&self, state: &EnvState) -> Result<Vec<f64>> {
        if state.0.len() != self.standardizer.dim() {
            return Err(Error::Dimension {
                context: "policy observation",
                expected: self.standardizer.dim(),
                got: state.0.len(),
            });
        }
        Ok(self.standardizer.apply(&state.0))
    }

    /// Per-head log-probabilities for one standardized observation.
    fn head_log_probs(&self, logits: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; logits.len()];
        let mut o = 0;
        for &k in &self.heads {
            log_softmax(&logits[o..o + k], &mut out[o..o + k]);
            o += k;
        }
        out
    }

    /// Category probabilities of every head.
    pub fn distribution(&self, state: &EnvState) -> Result<Vec<Vec<f64>>> {
        let logits = self.actor.forward(&self.observe(state)?)?;
        let lp = self.head_log_probs(&logits);
        let mut o = 0;
        Ok(self
            .heads
            .iter()
            .map(|&k| {
                let p = lp[o..o + k].iter().map(|v| v.exp()).collect();
                o += k;
                p
            })
            .collect())
    }

    pub fn value(&self, state: &EnvState) -> Result<f64> {
        Ok(self.critic.forward(&self.observe(state)?)?[0])
    }

    fn decode(&self, indices: &[usize]) -> ActionVec {
        ActionVec(indices.iter().zip(&self.lows).map(|(&i, &lo)| lo + i as i32).collect())
    }

    pub fn sample<R: Rng>(&self, state: &EnvState, rng: &mut R) -> Result<PolicyStep> {
        let obs = self.observe(state)?;
        let lp = self.head_log_probs(&self.actor.forward(&obs)?);
        let mut indices = Vec::with_capacity(self.heads.len());
        let mut log_prob = 0.0;
        let mut o = 0;
        for &k in &self.heads {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut choice = k - 1;
            for j in 0..k {
                acc += lp[o + j].exp();
                if u < acc {
                    choice = j;
                    break;
                }
            }
            log_prob += lp[o + choice];
            indices.push(choice);
            o += k;
        }
        Ok(PolicyStep {
            action: self.decode(&indices),
            indices,
            log_prob,
            value: self.critic.forward(&obs)?[0],
        })
    }

    /// Most likely category of every head (lowest index on ties).
    pub fn greedy(&self, state: &EnvState) -> Result<ActionVec> {
        let logits = self.actor.forward(&self.observe(state)?)?;
        let mut o = 0;
        let indices: Vec<usize> = self
            .heads
            .iter()
            .map(|&k| {
                let head = &logits[o..o + k];
                o += k;
                (0..k).fold(0, |best, j| if head[j] > head[best] { j } else { best })
            })
            .collect();
        Ok(self.decode(&indices))
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let ac: ActorCritic = read_json(path)?;
        let actor = Mlp::from_parts(
            ac.actor.sizes().to_vec(),
            ac.actor.activations().to_vec(),
            ac.actor.params().to_vec(),
        )?;
        let critic = Mlp::from_parts(
            ac.critic.sizes().to_vec(),
            ac.critic.activations().to_vec(),
            ac.critic.params().to_vec(),
        )?;
        if actor.output_dim() != ac.heads.iter().sum::<usize>()
            || critic.output_dim() != 1
            || actor.input_dim() != ac.standardizer.dim()
            || ac.lows.len() != ac.heads.len()
        {
            return Err(Error::Config(format!(
                "policy model at {} is malformed",
                path.display()
            )));
        }
        Ok(Self { actor, critic, ..ac })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyMode {
    Greedy,
    Sample,
}

/// Runs an actor-critic as a [`Controller`].
pub struct PolicyController {
    pub policy: Arc<ActorCritic>,
    mode: PolicyMode,
    rng: ChaCha8Rng,
}

impl PolicyController {
    pub fn greedy(policy: Arc<ActorCritic>) -> Self {
        Self {
            policy,
            mode: PolicyMode::Greedy,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn sampling(policy: Arc<ActorCritic>, seed: u64) -> Self {
        Self {
            policy,
            mode: PolicyMode::Sample,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Controller for PolicyController {
    fn name(&self) -> String {
        "ppo".into()
    }

    fn act(&mut self, state: &EnvState) -> ActionVec {
        let out = match self.mode {
            PolicyMode::Greedy => self.policy.greedy(state),
            PolicyMode::Sample => self.policy.sample(state, &mut self.rng).map(|s| s.action),
        };
        out.expect("state dimension checked when the policy was built")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    /// Observed state before each action.
    pub states: Vec<EnvState>,
    /// Successor state; the learned reward is evaluated on it.
    pub next_states: Vec<EnvState>,
    pub actions: Vec<Vec<usize>>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    /// Critic value of the successor state, used for bootstrapping.
    pub next_values: Vec<f64>,
    /// Whether the episode ended after this step.
    pub episode_ends: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Generalized advantage estimation. Episodes are cut at `episode_ends` and bootstrapped with
/// `next_values`. Returns `(advantages, returns)`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    episode_ends: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || next_values.len() != n || episode_ends.len() != n {
        return Err(Error::Dimension {
            context: "gae inputs",
            expected: n,
            got: values.len().min(next_values.len()).min(episode_ends.len()),
        });
    }
    let mut adv = vec![0.0; n];
    let mut carry = 0.0;
    for t in (0..n).rev() {
        if episode_ends[t] {
            carry = 0.0;
        }
        let delta = rewards[t] + gamma * next_values[t] - values[t];
        carry = delta + gamma * lambda * carry;
        adv[t] = carry;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Steps an environment through consecutive training episodes.
pub struct RolloutRunner {
    env: Env,
    scenario: TrafficScenario,
    episode_len: usize,
    seed_base: u64,
    episode: u64,
    step_in_episode: usize,
    obs: Option<EnvState>,
}

impl RolloutRunner {
    /// Episode `k` is simulated with environment seed `seed_base + k`.
    pub fn new(env: Env, scenario: TrafficScenario, episode_len: usize, seed_base: u64) -> Self {
        Self {
            env,
            scenario,
            episode_len,
            seed_base,
            episode: 0,
            step_in_episode: 0,
            obs: None,
        }
    }

    pub fn episodes_started(&self) -> u64 {
        self.episode
    }

    pub fn collect<R: Rng>(
        &mut self,
        policy: &ActorCritic,
        reward: &RewardModel,
        n_steps: usize,
        rng: &mut R,
    ) -> Result<RolloutBuffer> {
        let mut buf = RolloutBuffer::default();
        for _ in 0..n_steps {
            let obs = match self.obs.take() {
                Some(o) => o,
                None => {
                    let o = self.env.reset(&self.scenario, self.seed_base + self.episode)?;
                    self.episode += 1;
                    self.step_in_episode = 0;
                    o
                }
            };
            let step = policy.sample(&obs, rng)?;
            let next = self.env.step(&step.action)?;
            self.step_in_episode += 1;
            let end = self.step_in_episode >= self.episode_len;
            buf.rewards.push(reward.reward(&next)?);
            buf.next_values.push(policy.value(&next)?);
            buf.episode_ends.push(end);
            buf.states.push(obs);
            buf.actions.push(step.indices);
            buf.log_probs.push(step.log_prob);
            buf.values.push(step.value);
            self.obs = if end { None } else { Some(next.clone()) };
            buf.next_states.push(next);
        }
        Ok(buf)
    }
}

/// Collects `n_steps` transitions from fresh episodes seeded from `seed`.
pub fn collect_rollout(
    env: Env,
    scenario: &TrafficScenario,
    policy: &ActorCritic,
    reward: &RewardModel,
    n_steps: usize,
    episode_len: usize,
    seed: u64,
) -> Result<RolloutBuffer> {
    let mut runner = RolloutRunner::new(env, scenario.clone(), episode_len, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    runner.collect(policy, reward, n_steps, &mut rng)
}

/// A minibatch of standardized observations with fixed advantages and return targets.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniBatch {
    pub obs: Vec<f64>,
    pub actions: Vec<Vec<usize>>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl MiniBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoLoss {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Mean of the clipped surrogate `min(r·A, clip(r)·A)`.
    pub clipped_objective: f64,
    /// Mean of the unclipped surrogate `r·A`.
    pub unclipped_objective: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    /// Mean probability ratio.
    pub mean_ratio: f64,
    pub actor_grad: Vec<f64>,
    pub critic_grad: Vec<f64>,
}

/// `policy_loss + vf_coef·value_loss − ent_coef·entropy` and its gradients.
pub fn ppo_loss(ac: &ActorCritic, mb: &MiniBatch, cfg: &PpoConfig) -> Result<PpoLoss> {
    let b = mb.len();
    if b == 0 {
        return Err(Error::Config("ppo loss of an empty minibatch".into()));
    }
    let width: usize = ac.heads.iter().sum();
    let actor_cache = ac.actor.forward_batch(&mb.obs, b)?;
    let critic_cache = ac.critic.forward_batch(&mb.obs, b)?;
    let logits = actor_cache.output();
    let values = critic_cache.output();
    let eps = cfg.clip_range;
    let inv_b = 1.0 / b as f64;

    let mut actor_up = vec![0.0; b * width];
    let mut critic_up = vec![0.0; b];
    let (mut pol, mut val, mut ent) = (0.0, 0.0, 0.0);
    let (mut clipped_obj, mut unclipped_obj, mut clipped, mut kl, mut ratio_sum) = (0.0, 0.0, 0usize, 0.0, 0.0);
    let mut lp = vec![0.0; width];
    for i in 0..b {
        let row = &logits[i * width..(i + 1) * width];
        let mut o = 0;
        let mut logp = 0.0;
        let mut h_total = 0.0;
        let mut head_h = Vec::with_capacity(ac.heads.len());
        for (k, &n) in ac.heads.iter().enumerate() {
            log_softmax(&row[o..o + n], &mut lp[o..o + n]);
            logp += lp[o + mb.actions[i][k]];
            let h: f64 = -lp[o..o + n].iter().map(|l| l.exp() * l).sum::<f64>();
            head_h.push(h);
            h_total += h;
            o += n;
        }
        let log_ratio = logp - mb.old_log_probs[i];
        let ratio = log_ratio.exp();
        let a = mb.advantages[i];
        let surr1 = ratio * a;
        let surr2 = ratio.clamp(1.0 - eps, 1.0 + eps) * a;
        let obj = surr1.min(surr2);
        pol -= obj;
        clipped_obj += obj;
        unclipped_obj += surr1;
        ratio_sum += ratio;
        if (ratio - 1.0).abs() > eps {
            clipped += 1;
        }
        kl += (ratio - 1.0) - log_ratio;
        ent += h_total;
        let d_logp = if surr1 <= surr2 { -ratio * a * inv_b } else { 0.0 };
        let d_h = -cfg.ent_coef * inv_b;
        let up = &mut actor_up[i * width..(i + 1) * width];
        let mut o = 0;
        for (k, &n) in ac.heads.iter().enumerate() {
            for j in 0..n {
                let p = lp[o + j].exp();
                let indicator = if j == mb.actions[i][k] { 1.0 } else { 0.0 };
                up[o + j] = d_logp * (indicator - p) + d_h * (-p * (lp[o + j] + head_h[k]));
            }
            o += n;
        }
        let diff = values[i] - mb.returns[i];
        val += diff * diff;
        critic_up[i] = 2.0 * cfg.vf_coef * diff * inv_b;
    }
    let policy_loss = pol * inv_b;
    let value_loss = val * inv_b;
    let entropy = ent * inv_b;
    let loss = policy_loss + cfg.vf_coef * value_loss - cfg.ent_coef * entropy;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!(
            "ppo loss (policy {policy_loss}, value {value_loss}, entropy {entropy})"
        )));
    }
    let mut actor_grad = vec![0.0; ac.actor.param_len()];
    ac.actor.backward(&actor_cache, &actor_up, &mut actor_grad)?;
    let mut critic_grad = vec![0.0; ac.critic.param_len()];
    ac.critic.backward(&critic_cache, &critic_up, &mut critic_grad)?;
    Ok(PpoLoss {
        loss,
        policy_loss,
        value_loss,
        entropy,
        clipped_objective: clipped_obj * inv_b,
        unclipped_objective: unclipped_obj * inv_b,
        clip_fraction: clipped as f64 * inv_b,
        approx_kl: kl * inv_b,
        mean_ratio: ratio_sum * inv_b,
        actor_grad,
        critic_grad,
    })
}

#[derive(Debug, Clone)]
pub struct PpoOptimizer {
    pub actor: Adam,
    pub critic: Adam,
}

impl PpoOptimizer {
    pub fn new(ac: &ActorCritic, cfg: &PpoConfig) -> Self {
        let adam = AdamConfig::new(cfg.lr, cfg.weight_decay);
        Self {
            actor: Adam::new(adam, ac.actor.param_len()),
            critic: Adam::new(adam, ac.critic.param_len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// Mean ratio of the first minibatch, before any parameter change.
    pub first_ratio: f64,
    /// Largest `clipped − unclipped` surrogate gap over all minibatches.
    pub max_clip_excess: f64,
    pub minibatches: usize,
}

/// Several epochs of clipped-surrogate minibatch updates over `buf`. Advantages are
/// normalized within each minibatch.
pub fn ppo_update<R: Rng>(
    ac: &mut ActorCritic,
    opt: &mut PpoOptimizer,
    buf: &RolloutBuffer,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateStats> {
    if buf.advantages.len() != buf.len() || buf.returns.len() != buf.len() {
        return Err(Error::Config("advantages must be computed before the update".into()));
    }
    let obs: Vec<Vec<f64>> = buf.states.iter().map(|s| ac.observe(s)).collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..buf.len()).collect();
    let mut stats = UpdateStats {
        policy_loss: 0.0,
        value_loss: 0.0,
        entropy: 0.0,
        approx_kl: 0.0,
        clip_fraction: 0.0,
        first_ratio: f64::NAN,
        max_clip_excess: f64::NEG_INFINITY,
        minibatches: 0,
    };
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            let mut adv: Vec<f64> = chunk.iter().map(|&i| buf.advantages[i]).collect();
            if adv.len() > 1 {
                let n = adv.len() as f64;
                let mean = adv.iter().sum::<f64>() / n;
                let sd = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
                adv.iter_mut().for_each(|a| *a = (*a - mean) / (sd + 1e-8));
            }
            let mb = MiniBatch {
                obs: chunk.iter().flat_map(|&i| obs[i].iter().copied()).collect(),
                actions: chunk.iter().map(|&i| buf.actions[i].clone()).collect(),
                old_log_probs: chunk.iter().map(|&i| buf.log_probs[i]).collect(),
                advantages: adv,
                returns: chunk.iter().map(|&i| buf.returns[i]).collect(),
            };
            let mut out = ppo_loss(ac, &mb, cfg)?;
            if stats.minibatches == 0 {
                stats.first_ratio = out.mean_ratio;
            }
            stats.max_clip_excess = stats
                .max_clip_excess
                .max(out.clipped_objective - out.unclipped_objective);
            stats.policy_loss += out.policy_loss;
            stats.value_loss += out.value_loss;
            stats.entropy += out.entropy;
            stats.approx_kl += out.approx_kl;
            stats.clip_fraction += out.clip_fraction;
            stats.minibatches += 1;
            let na = out.actor_grad.len();
            let mut joint = out.actor_grad;
            joint.append(&mut out.critic_grad);
            clip_grad_norm(&mut joint, cfg.max_grad_norm);
            opt.actor.update(ac.actor.params_mut(), &joint[..na])?;
            opt.critic.update(ac.critic.params_mut(), &joint[na..])?;
        }
    }
    if stats.minibatches > 0 {
        let m = stats.minibatches as f64;
        stats.policy_loss /= m;
        stats.value_loss /= m;
        stats.entropy /= m;
        stats.approx_kl /= m;
        stats.clip_fraction /= m;
    }
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub update: usize,
    pub timesteps: usize,
    pub mean_learned_reward: f64,
    /// Mean ranking-function reward of the same successor states.
    pub mean_rank_reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedPolicy {
    pub policy: ActorCritic,
    pub curve: Vec<CurvePoint>,
}

/// Seeds of training episodes never overlap the demonstration or evaluation seeds.
pub const TRAIN_SEED_BASE: u64 = 1_000_000;

/// Alternates rollout collection and PPO updates until `cfg.total_timesteps` transitions
/// have been collected.
pub fn train_policy(
    network: Arc<Network>,
    env_cfg: &EnvConfig,
    scenario: &TrafficScenario,
    reward: &RewardModel,
    kpi: &KpiConfig,
    cfg: &PpoConfig,
    seed: u64,
) -> Result<TrainedPolicy> {
    cfg.validate()?;
    let env = Env::with_network(network, env_cfg.clone())?;
    let space = env.action_space();
    let mut policy = ActorCritic::new(reward.standardizer.clone(), space, &cfg.hidden, seed ^ 0xAC7_0001)?;
    let mut opt = PpoOptimizer::new(&policy, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xAC7_0002);
    let mut runner = RolloutRunner::new(
        env,
        scenario.clone(),
        cfg.episode_len,
        TRAIN_SEED_BASE + seed.wrapping_mul(100_000),
    );
    let mut curve = Vec::new();
    let mut done = 0;
    while done < cfg.total_timesteps {
        let n = cfg.n_steps.min(cfg.total_timesteps - done);
        let mut buf = runner.collect(&policy, reward, n, &mut rng)?;
        done += n;
        let (adv, ret) = compute_gae(
            &buf.rewards,
            &buf.values,
            &buf.next_values,
            &buf.episode_ends,
            cfg.gamma,
            cfg.gae_lambda,
        )?;
        buf.advantages = adv;
        buf.returns = ret;
        let stats = ppo_update(&mut policy, &mut opt, &buf, cfg, &mut rng)
            .map_err(|e| Error::NonFinite(format!("ppo update {} diverged: {e}", curve.len())))?;
        let point = CurvePoint {
            update: curve.len(),
            timesteps: done,
            mean_learned_reward: buf.rewards.iter().sum::<f64>() / n as f64,
            mean_rank_reward: buf.next_states.iter().map(|s| rank_reward(s, kpi)).sum::<f64>() / n as f64,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            approx_kl: stats.approx_kl,
            clip_fraction: stats.clip_fraction,
        };
        log::info!(
            "ppo update {} ({} steps): learned reward {:.4}, rank reward {:.3}, entropy {:.2}",
            point.update,
            point.timesteps,
            point.mean_learned_reward,
            point.mean_rank_reward,
            point.entropy
        );
        curve.push(point);
    }
    Ok(TrainedPolicy { policy, curve })
}

pub fn write_curve_csv(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for p in curve {
        w.serialize(p).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{finite_difference, relative_error};

    fn small_policy(seed: u64) -> ActorCritic {
        ActorCritic::with_heads(Standardizer::identity(3), vec![3, 2, 4], vec![0, -1, 2], &[5, 4], seed).unwrap()
    }

    fn batch(ac: &ActorCritic, seed: u64, n: usize) -> MiniBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs: Vec<f64> = (0..3 * n).map(|_| rng.random_range(-1.5..1.5)).collect();
        let actions: Vec<Vec<usize>> = (0..n)
            .map(|_| ac.heads.iter().map(|&k| rng.random_range(0..k)).collect())
            .collect();
        MiniBatch {
            old_log_probs: (0..n).map(|_| rng.random_range(-4.0..-1.0)).collect(),
            advantages: (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
            returns: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            obs,
            actions,
        }
    }

    #[test]
    fn heads_are_distributions() {
        let ac = small_policy(1);
        let s = EnvState(vec![0.3, -2.0, 1.0]);
        let d = ac.distribution(&s).unwrap();
        assert_eq!(d.len(), 3);
        for (p, &k) in d.iter().zip(&ac.heads) {
            assert_eq!(p.len(), k);
            assert!(p.iter().all(|v| *v >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sampled_actions_decode_into_bounds() {
        let space = ActionSpace::new(4);
        let ac = ActorCritic::new(Standardizer::identity(12), space, &[8], 2).unwrap();
        assert_eq!(ac.head_count(), 16);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = EnvState(vec![0.5; 12]);
        for _ in 0..200 {
            let step = ac.sample(&s, &mut rng).unwrap();
            assert!(space.contains(&step.action));
        }
        assert!(space.contains(&ac.greedy(&s).unwrap()));
        assert_eq!(ac.greedy(&s).unwrap(), ac.greedy(&s).unwrap());
    }

    #[test]
    fn sample_log_prob_matches_distribution() {
        let ac = small_policy(5);
        let s = EnvState(vec![1.0, 0.0, -0.5]);
        let step = ac.sample(&s, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let d = ac.distribution(&s).unwrap();
        let lp: f64 = step.indices.iter().zip(&d).map(|(&i, p)| p[i].ln()).sum();
        assert!((lp - step.log_prob).abs() < 1e-12);
        assert_eq!(
            step.action.0,
            vec![
                step.indices[0] as i32,
                step.indices[1] as i32 - 1,
                step.indices[2] as i32 + 2
            ]
        );
    }

    #[test]
    fn gae_boundary_cases() {
        let r = [1.0, -0.5, 2.0, 0.25, 3.0];
        let v = [0.2, 0.4, -0.1, 0.3, 0.0];
        let nv = [0.4, -0.1, 0.3, 0.0, 0.7];
        let ends = [false; 5];
        let (adv, ret) = compute_gae(&r, &v, &nv, &ends, 0.9, 0.0).unwrap();
        for t in 0..5 {
            assert!((adv[t] - (r[t] + 0.9 * nv[t] - v[t])).abs() < 1e-12);
            assert!((ret[t] - adv[t] - v[t]).abs() < 1e-12);
        }
        let (adv, _) = compute_gae(&r, &[0.0; 5], &[0.0; 5], &ends, 1.0, 1.0).unwrap();
        let expected = [5.75, 4.75, 5.25, 3.25, 3.0];
        for t in 0..5 {
            assert!((adv[t] - expected[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn gae_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let r: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut nv: Vec<f64> = v[1..].to_vec();
            nv.push(rng.random_range(-1.0..1.0));
            let (g, l) = (rng.random_range(0.5..0.99), rng.random_range(0.0..1.0));
            let (adv, _) = compute_gae(&r, &v, &nv, &[false; 5], g, l).unwrap();
            for t in 0..5 {
                let mut a = 0.0;
                for k in t..5 {
                    let delta = r[k] + g * nv[k] - v[k];
                    a += (g * l).powi((k - t) as i32) * delta;
                }
                assert!((adv[t] - a).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gae_stops_at_episode_end() {
        let (adv, _) = compute_gae(&[1.0, 1.0], &[0.0; 2], &[0.0; 2], &[true, false], 1.0, 1.0).unwrap();
        assert_eq!(adv, vec![1.0, 1.0]);
        assert!(compute_gae(&[1.0], &[], &[0.0], &[false], 0.9, 0.9).is_err());
    }

    #[test]
    fn ppo_gradients_match_finite_differences() {
        let cfg = PpoConfig::default();
        for seed in 0..5 {
            let ac = small_policy(seed);
            let mb = batch(&ac, seed + 100, 6);
            let out = ppo_loss(&ac, &mb, &cfg).unwrap();
            let fa = finite_difference(
                |p| {
                    let mut m = ac.clone();
                    m.actor.params_mut().copy_from_slice(p);
                    ppo_loss(&m, &mb, &cfg).unwrap().loss
                },
                ac.actor.params(),
                1e-6,
            );
            let fc = finite_difference(
                |p| {
                    let mut m = ac.clone();
                    m.critic.params_mut().copy_from_slice(p);
                    ppo_loss(&m, &mb, &cfg).unwrap().loss
                },
                ac.critic.params(),
                1e-6,
            );
            assert!(relative_error(&out.actor_grad, &fa) < 1e-5);
            assert!(relative_error(&out.critic_grad, &fc) < 1e-5);
        }
    }

    fn on_policy_batch(ac: &ActorCritic, advantages: Vec<f64>) -> MiniBatch {
        let mut mb = batch(ac, 3, advantages.len());
        for i in 0..mb.len() {
            let s = EnvState(mb.obs[3 * i..3 * i + 3].to_vec());
            let d = ac.distribution(&s).unwrap();
            mb.old_log_probs[i] = mb.actions[i].iter().zip(&d).map(|(&a, p)| p[a].ln()).sum();
        }
        mb.advantages = advantages;
        mb
    }

    #[test]
    fn same_policy_ratio_is_one() {
        let ac = small_policy(8);
        let mb = on_policy_batch(&ac, vec![1.0, -1.0, 0.5, 2.0]);
        let out = ppo_loss(&ac, &mb, &PpoConfig::default()).unwrap();
        assert!((out.mean_ratio - 1.0).abs() < 1e-12);
        assert_eq!(out.clip_fraction, 0.0);
        assert!(out.approx_kl.abs() < 1e-12);
    }

    #[test]
    fn zero_advantages_leave_only_entropy_gradient() {
        let ac = small_policy(4);
        let mb = on_policy_batch(&ac, vec![0.0; 5]);
        let cfg = PpoConfig {
            ent_coef: 0.0,
            ..PpoConfig::default()
        };
        let out = ppo_loss(&ac, &mb, &cfg).unwrap();
        assert!(out.actor_grad.iter().all(|g| g.abs() < 1e-15));
        assert_eq!(out.policy_loss, 0.0);
    }

    #[test]
    fn clipped_objective_never_exceeds_unclipped() {
        for seed in 0..20 {
            let ac = small_policy(seed);
            let out = ppo_loss(&ac, &batch(&ac, seed, 16), &PpoConfig::default()).unwrap();
            assert!(out.clipped_objective <= out.unclipped_objective + 1e-15);
        }
    }

    #[test]
    fn update_starts_on_policy_and_respects_clip_bound() {
        let mut ac = small_policy(2);
        let cfg = PpoConfig {
            batch_size: 8,
            epochs: 3,
            ..PpoConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut buf = RolloutBuffer::default();
        for t in 0..32 {
            let s = EnvState(vec![
                (t as f64 * 0.37).sin(),
                (t as f64 * 0.11).cos(),
                0.1 * t as f64 - 1.5,
            ]);
            let step = ac.sample(&s, &mut rng).unwrap();
            buf.rewards.push(step.indices[0] as f64);
            buf.values.push(step.value);
            buf.next_values.push(0.0);
            buf.episode_ends.push(t % 8 == 7);
            buf.log_probs.push(step.log_prob);
            buf.actions.push(step.indices);
            buf.next_states.push(s.clone());
            buf.states.push(s);
        }
        let (adv, ret) = compute_gae(
            &buf.rewards,
            &buf.values,
            &buf.next_values,
            &buf.episode_ends,
            0.97,
            0.95,
        )
        .unwrap();
        buf.advantages = adv;
        buf.returns = ret;
        let mut opt = PpoOptimizer::new(&ac, &cfg);
        let before = ac.clone();
        let stats = ppo_update(&mut ac, &mut opt, &buf, &cfg, &mut rng).unwrap();
        assert!((stats.first_ratio - 1.0).abs() < 1e-12);
        assert!(stats.max_clip_excess <= 1e-15);
        assert_eq!(stats.minibatches, 12);
        assert_ne!(ac, before);
    }

    #[test]
    fn policy_json_round_trip() {
        let ac = small_policy(6);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("policy.json");
        ac.save_json(&p).unwrap();
        assert_eq!(ActorCritic::load_json(&p).unwrap(), ac);
    }

    #[test]
    fn config_validation() {
        assert!(PpoConfig::default().validate().is_ok());
        assert!(PpoConfig {
            gamma: 1.0,
            ..PpoConfig::default()
        }
        .validate()
        .is_err());
        assert!(PpoConfig {
            clip_range: 0.0,
            ..PpoConfig::default()
        }
        .validate()
        .is_err());
    }
}
