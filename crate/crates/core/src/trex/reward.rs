use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sampling::{sample_pairs, DemoSet, PreferencePair, SamplerKind};
use crate::env::EnvState;
use crate::kpi::{pearson, states_return, KpiConfig};
use crate::nn::{Activation, Adam, AdamConfig, Mlp};
use crate::pipeline::io::{csv_writer, read_json, write_json};
use crate::{Error, Result};

/// `exp(j_j) / (exp(j_i) + exp(j_j))` without overflow.
pub fn pref_prob(j_i: f64, j_j: f64) -> f64 {
    let d = j_j - j_i;
    if d >= 0.0 {
        1.0 / (1.0 + (-d).exp())
    } else {
        let e = d.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` for any finite `x`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `-ln pref_prob(j_worse, j_better)`.
pub fn pair_loss(j_worse: f64, j_better: f64) -> f64 {
    softplus(j_worse - j_better)
}

/// Per-feature affine standardization fitted on a set of states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Population mean and standard deviation per feature. Constant features get unit scale.
    pub fn fit<'a, I: IntoIterator<Item = &'a EnvState>>(states: I) -> Result<Self> {
        let mut n = 0usize;
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        for s in states {
            if sum.is_empty() {
                sum = vec![0.0; s.0.len()];
                sq = vec![0.0; s.0.len()];
            } else if s.0.len() != sum.len() {
                return Err(Error::Dimension {
                    context: "standardizer input",
                    expected: sum.len(),
                    got: s.0.len(),
                });
            }
            for (i, v) in s.0.iter().enumerate() {
                sum[i] += v;
                sq[i] += v * v;
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::Config("cannot fit a standardizer on zero states".into()));
        }
        let nf = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = (q / nf - m * m).max(0.0);
                let sd = var.sqrt();
                if sd > 1e-9 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.extend(
            x.iter()
                .zip(self.mean.iter().zip(&self.std))
                .map(|(v, (m, s))| (v - m) / s),
        );
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.len());
        self.apply_into(x, &mut out);
        out
    }
}

/// Per-state reward network together with its input standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardModel {
    pub standardizer: Standardizer,
    pub net: Mlp,
}

pub fn reward_net_activations(hidden_layers: usize) -> Vec<Activation> {
    let mut acts = vec![Activation::LeakyRelu; hidden_layers];
    acts.push(Activation::Identity);
    acts
}

impl RewardModel {
    pub fn init(standardizer: Standardizer, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut sizes = vec![standardizer.dim()];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Mlp::init(&sizes, &reward_net_activations(hidden.len()), &mut rng)?;
        Ok(Self { standardizer, net })
    }

    pub fn zeros(dim: usize, hidden: &[usize]) -> Result<Self> {
        let mut sizes = vec![dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Ok(Self {
            standardizer: Standardizer::identity(dim),
            net: Mlp::zeros(&sizes, &reward_net_activations(hidden.len()))?,
        })
    }

    fn standardize_all<'a, I: IntoIterator<Item = &'a EnvState>>(&self, states: I) -> Result<(Vec<f64>, usize)> {
        let mut x = Vec::new();
        let mut n = 0;
        for s in states {
            if s.0.len() != self.standardizer.dim() {
                return Err(Error::Dimension {
                    context: "reward model input",
                    expected: self.standardizer.dim(),
                    got: s.0.len(),
                });
            }
            self.standardizer.apply_into(&s.0, &mut x);
            n += 1;
        }
        Ok((x, n))
    }

    /// r̂(s) for every state, in order.
    pub fn rewards<'a, I: IntoIterator<Item = &'a EnvState>>(&self, states: I) -> Result<Vec<f64>> {
        let (x, n) = self.standardize_all(states)?;
        if n == 0 {
            return Ok(Vec::new());
        }
        Ok(self.net.forward_batch(&x, n)?.layers.pop().expect("output"))
    }

    pub fn reward(&self, state: &EnvState) -> Result<f64> {
        Ok(self.rewards(std::iter::once(state))?[0])
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let m: RewardModel = read_json(path)?;
        let net = Mlp::from_parts(
            m.net.sizes().to_vec(),
            m.net.activations().to_vec(),
            m.net.params().to_vec(),
        )?;
        if net.input_dim() != m.standardizer.dim() || net.output_dim() != 1 {
            return Err(Error::Config(format!(
                "reward model at {} is malformed",
                path.display()
            )));
        }
        Ok(Self { net, ..m })
    }
}

/// Ĵ = Σ r̂(s) over the given states.
pub fn predict_return(model: &RewardModel, states: &[EnvState]) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::Config("predicted return of an empty state sequence".into()));
    }
    Ok(model.rewards(states)?.iter().sum())
}

/// Mean pairwise loss over `pairs` and its gradient with respect to the network parameters.
pub fn trex_loss(model: &RewardModel, demos: &DemoSet, pairs: &[&PreferencePair]) -> Result<(f64, Vec<f64>)> {
    loss_and_grad(model, demos, pairs).map(|(l, g, _)| (l, g))
}

fn loss_and_grad(model: &RewardModel, demos: &DemoSet, pairs: &[&PreferencePair]) -> Result<(f64, Vec<f64>, usize)> {
    if pairs.is_empty() {
        return Err(Error::Config("loss of an empty batch".into()));
    }
    let mut states = Vec::new();
    let mut spans = Vec::with_capacity(pairs.len());
    for p in pairs {
        let ((tw, iw), (tb, ib)) = p.ordered();
        let start = states.len();
        states.extend(iw.iter().map(|&i| &demos.trajectories[tw].states[i]));
        let mid = states.len();
        states.extend(ib.iter().map(|&i| &demos.trajectories[tb].states[i]));
        spans.push((start, mid, states.len()));
    }
    let (x, n) = model.standardize_all(states.iter().copied())?;
    let cache = model.net.forward_batch(&x, n)?;
    let r = cache.output();
    let scale = 1.0 / pairs.len() as f64;
    let mut loss = 0.0;
    let mut upstream = vec![0.0; n];
    let mut correct = 0;
    for &(s, m, e) in &spans {
        let jw: f64 = r[s..m].iter().sum();
        let jb: f64 = r[m..e].iter().sum();
        if jb > jw {
            correct += 1;
        }
        loss += pair_loss(jw, jb);
        // d/dJw softplus(Jw − Jb) = σ(Jw − Jb)
        let sig = pref_prob(jb, jw);
        upstream[s..m].iter_mut().for_each(|u| *u = sig * scale);
        upstream[m..e].iter_mut().for_each(|u| *u = -sig * scale);
    }
    loss *= scale;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("pairwise loss is {loss}")));
    }
    let mut grad = vec![0.0; model.net.param_len()];
    model.net.backward(&cache, &upstream, &mut grad)?;
    Ok((loss, grad, correct))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardTrainConfig {
    pub pairs: usize,
    pub epochs: usize,
    pub subtrajectory_len: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub hidden: Vec<usize>,
}

impl Default for RewardTrainConfig {
    fn default() -> Self {
        Self {
            pairs: 5000,
            epochs: 200,
            subtrajectory_len: 10,
            batch_size: 32,
            lr: 1e-5,
            weight_decay: 1e-4,
            hidden: vec![64, 64],
        }
    }
}

impl RewardTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pairs == 0 || self.batch_size == 0 || self.subtrajectory_len == 0 {
            return Err(Error::Config(
                "pairs, batch_size and subtrajectory_len must be positive".into(),
            ));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("learning rate must be > 0 and weight decay ≥ 0".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    /// Fraction of pairs whose predicted order agrees with the label, before the epoch's updates.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedReward {
    pub model: RewardModel,
    pub sampler: SamplerKind,
    pub seed: u64,
    pub log: Vec<EpochLog>,
}

/// Trains a reward model on pairs sampled from the training partition of `demos`.
pub fn train_reward(
    demos: &DemoSet,
    sampler: SamplerKind,
    cfg: &RewardTrainConfig,
    seed: u64,
) -> Result<TrainedReward> {
    cfg.validate()?;
    let pairs = sample_pairs(sampler, demos, demos.train(), cfg.pairs, cfg.subtrajectory_len, seed)?;
    train_on_pairs(demos, &pairs, sampler, cfg, seed)
}

pub fn train_on_pairs(
    demos: &DemoSet,
    pairs: &[PreferencePair],
    sampler: SamplerKind,
    cfg: &RewardTrainConfig,
    seed: u64,
) -> Result<TrainedReward> {
    cfg.validate()?;
    let standardizer = Standardizer::fit(demos.train().iter().flat_map(|&t| demos.trajectories[t].states.iter()))?;
    let mut model = RewardModel::init(standardizer, &cfg.hidden, seed ^ 0x5EED_0001)?;
    let mut adam = Adam::new(AdamConfig::new(cfg.lr, cfg.weight_decay), model.net.param_len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0002);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&PreferencePair> = chunk.iter().map(|&i| &pairs[i]).collect();
            let (loss, grad, ok) =
                loss_and_grad(&model, demos, &batch).map_err(|e| Error::NonFinite(format!("epoch {epoch}: {e}")))?;
            loss_sum += loss * batch.len() as f64;
            correct += ok;
            adam.update(model.net.params_mut(), &grad)?;
        }
        let entry = EpochLog {
            epoch,
            loss: loss_sum / pairs.len() as f64,
            accuracy: correct as f64 / pairs.len() as f64,
        };
        log::debug!("reward epoch {epoch}: loss {:.5} acc {:.3}", entry.loss, entry.accuracy);
        log.push(entry);
    }
    Ok(TrainedReward {
        model,
        sampler,
        seed,
        log,
    })
}

pub fn write_training_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for e in log {
        w.serialize(e).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub predicted_return: f64,
    pub rf_return: f64,
    pub partition: String,
    pub trajectory: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationReport {
    /// `None` when either side is constant.
    pub pearson_train: Option<f64>,
    pub pearson_extrap: Option<f64>,
    pub points: Vec<ScatterPoint>,
}

/// Correlation between predicted returns and ranking-function returns on each partition.
pub fn extrapolation_report(model: &RewardModel, demos: &DemoSet, cfg: &KpiConfig) -> Result<ExtrapolationReport> {
    let mut points = Vec::with_capacity(demos.len());
    let mut corr = Vec::new();
    for (name, part) in [("train", demos.train()), ("extrapolation", demos.extrapolation())] {
        let mut truth = Vec::with_capacity(part.len());
        let mut pred = Vec::with_capacity(part.len());
        for &t in part {
            let states = &demos.trajectories[t].states;
            let p = predict_return(model, states)?;
            let rf = states_return(states, cfg);
            truth.push(rf);
            pred.push(p);
            points.push(ScatterPoint {
                predicted_return: p,
                rf_return: rf,
                partition: name.to_string(),
                trajectory: t,
            });
        }
        let r = pearson(&truth, &pred);
        if r.is_none() {
            log::warn!("pearson correlation undefined on the {name} partition");
        }
        corr.push(r);
    }
    Ok(ExtrapolationReport {
        pearson_train: corr[0],
        pearson_extrap: corr[1],
        points,
    })
}

impl ExtrapolationReport {
    pub fn write_scatter_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        for p in &self.points {
            w.serialize(p).map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
