use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::RunConfig;
use super::io::{csv_writer, ensure_dir, read_json, write_json, write_string};
use super::manifest::{sha256_file, Manifest};
use crate::env::{rollout, Controller, Env, Trajectory};
use crate::kpi::SectorKpis;
use crate::policy::{
    evaluate_controller, train_policy, write_curve_csv, ActorCritic, AdaptiveController, FixedController, KpiReport,
    PolicyController, RandomController,
};
use crate::sim::Network;
use crate::trex::{
    extrapolation_report, mislabel_rate, sample_pairs, train_reward, write_training_log, DemoSet, RewardModel,
    SamplerKind,
};
use crate::{Error, Result};

pub const DEMO_STAGE: &str = "collect-demos";
pub const REWARD_STAGE: &str = "train-reward";
pub const POLICY_STAGE: &str = "train-policy";
pub const EVAL_STAGE: &str = "evaluate";

/// Seed of the random controller that produced demonstration `env_seed`.
pub fn demo_controller_seed(env_seed: u64) -> u64 {
    env_seed ^ 0xD3_0000_0000
}

fn demo_file(i: usize) -> String {
    format!("traj_{i:03}.json")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RankingRow {
    trajectory: usize,
    file: String,
    seed: u64,
    rf_return: f64,
    rank: usize,
    partition: String,
}

/// Rolls out the random controller `demo_count` times per scenario, ranks and splits the
/// trajectories, and writes them with a manifest.
pub fn cmd_collect_demos(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let network = Network::new(cfg.env.sim.clone())?;
    let mut dirs = Vec::new();
    for &id in &cfg.scenarios {
        let scenario = cfg.scenario(id)?;
        let dir = cfg.demos_dir(id);
        ensure_dir(&dir)?;
        let mut env = Env::with_network(Arc::clone(&network), cfg.env.clone())?;
        let space = env.action_space();
        let mut trajectories = Vec::with_capacity(cfg.demo_count);
        for i in 0..cfg.demo_count {
            let seed = cfg.demo_seed_base + i as u64;
            let mut controller = RandomController::new(space, demo_controller_seed(seed));
            let t = rollout(&mut env, &mut controller, &scenario, seed, cfg.env.horizon)?;
            t.save_json(&dir.join(demo_file(i)))?;
            log::info!("scenario {id}: demonstration {}/{}", i + 1, cfg.demo_count);
            trajectories.push(t);
        }
        let demos = DemoSet::new(trajectories, cfg.kpi.clone())?;
        let cutoff = demos.train_cutoff();
        let mut rows: Vec<RankingRow> = (0..demos.len())
            .map(|i| RankingRow {
                trajectory: i,
                file: demo_file(i),
                seed: demos.trajectories[i].seed,
                rf_return: demos.returns()[i],
                rank: demos.rank[i],
                partition: if demos.rank[i] < cutoff {
                    "train"
                } else {
                    "extrapolation"
                }
                .into(),
            })
            .collect();
        rows.sort_by_key(|r| r.rank);
        let ranking_path = dir.join("ranking.csv");
        let mut w = csv_writer(&ranking_path)?;
        for r in &rows {
            w.serialize(r).map_err(|e| Error::csv(&ranking_path, e))?;
        }
        w.flush().map_err(|e| Error::io(&ranking_path, e))?;

        let mut manifest = Manifest::new(DEMO_STAGE, id, cfg);
        manifest.seed = Some(cfg.demo_seed_base);
        for i in 0..demos.len() {
            manifest.add_file(&dir, &demo_file(i))?;
        }
        manifest.add_file(&dir, "ranking.csv")?;
        manifest.extra = json!({
            "order": demos.all(),
            "train": demos.train(),
            "extrapolation": demos.extrapolation(),
            "returns": demos.returns(),
        });
        manifest.write(&dir)?;
        dirs.push(dir);
    }
    Ok(dirs)
}

/// Loads the demonstrations of scenario `id` in collection order.
pub fn load_demos(cfg: &RunConfig, id: u32) -> Result<DemoSet> {
    let dir = cfg.demos_dir(id);
    let manifest = Manifest::read(&dir)?;
    let trajectories = manifest
        .files
        .iter()
        .filter(|f| f.path.ends_with(".json"))
        .map(|f| Trajectory::load_json(&dir.join(&f.path)))
        .collect::<Result<Vec<_>>>()?;
    DemoSet::new(trajectories, cfg.kpi.clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSummary {
    pub sampler: SamplerKind,
    pub seed: u64,
    pub pearson_train: Option<f64>,
    pub pearson_extrap: Option<f64>,
    pub mislabel_rate: f64,
    pub final_loss: Option<f64>,
}

/// Trains the configured sampler's reward model on every scenario's demonstrations.
pub fn cmd_train_reward(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let mut dirs = Vec::new();
    for &id in &cfg.scenarios {
        let demos = load_demos(cfg, id)?;
        let dir = cfg.reward_dir(id, cfg.sampler, cfg.seed);
        ensure_dir(&dir)?;
        log::info!("scenario {id}: training {} reward (seed {})", cfg.sampler, cfg.seed);
        let trained = train_reward(&demos, cfg.sampler, &cfg.reward, cfg.seed)?;
        let pairs = sample_pairs(
            cfg.sampler,
            &demos,
            demos.train(),
            cfg.reward.pairs,
            cfg.reward.subtrajectory_len,
            cfg.seed,
        )?;
        let report = extrapolation_report(&trained.model, &demos, &cfg.kpi)?;
        let summary = RewardSummary {
            sampler: cfg.sampler,
            seed: cfg.seed,
            pearson_train: report.pearson_train,
            pearson_extrap: report.pearson_extrap,
            mislabel_rate: mislabel_rate(&demos, &pairs, &cfg.kpi)?,
            final_loss: trained.log.last().map(|e| e.loss),
        };
        trained.model.save_json(&dir.join("model.json"))?;
        write_training_log(&dir.join("train_log.csv"), &trained.log)?;
        report.write_scatter_csv(&dir.join("scatter.csv"))?;
        write_json(&dir.join("extrapolation.json"), &summary)?;
        let mut manifest = Manifest::new(REWARD_STAGE, id, cfg);
        manifest.seed = Some(cfg.seed);
        manifest.sampler = Some(cfg.sampler);
        for f in ["model.json", "train_log.csv", "scatter.csv", "extrapolation.json"] {
            manifest.add_file(&dir, f)?;
        }
        manifest.write(&dir)?;
        write_reward_comparison(cfg, id)?;
        dirs.push(dir);
    }
    Ok(dirs)
}

/// Summaries of every reward model trained so far for scenario `id`, ordered by directory name.
pub fn reward_summaries(cfg: &RunConfig, id: u32) -> Result<Vec<RewardSummary>> {
    let root = cfg.scenario_dir(id).join("reward");
    let mut dirs: Vec<PathBuf> = match std::fs::read_dir(&root) {
        Ok(rd) => rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect(),
        Err(_) => return Ok(Vec::new()),
    };
    dirs.sort();
    dirs.iter()
        .filter(|d| d.join("extrapolation.json").exists())
        .map(|d| read_json(&d.join("extrapolation.json")))
        .collect()
}

fn write_reward_comparison(cfg: &RunConfig, id: u32) -> Result<()> {
    let path = cfg.scenario_dir(id).join("reward").join("comparison.csv");
    let mut w = csv_writer(&path)?;
    for s in reward_summaries(cfg, id)? {
        w.serialize(&s).map_err(|e| Error::csv(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

/// Trains a PPO policy on the reward model of the configured sampler and seed.
pub fn cmd_train_policy(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let network = Network::new(cfg.env.sim.clone())?;
    let mut dirs = Vec::new();
    for &id in &cfg.scenarios {
        let reward = RewardModel::load_json(&cfg.reward_dir(id, cfg.sampler, cfg.seed).join("model.json"))?;
        let scenario = cfg.scenario(id)?;
        let dir = cfg.policy_dir(id, cfg.sampler, cfg.seed);
        ensure_dir(&dir)?;
        log::info!(
            "scenario {id}: training policy on the {} reward (seed {})",
            cfg.sampler,
            cfg.seed
        );
        let trained = train_policy(
            Arc::clone(&network),
            &cfg.env,
            &scenario,
            &reward,
            &cfg.kpi,
            &cfg.ppo,
            cfg.seed,
        )?;
        trained.policy.save_json(&dir.join("policy.json"))?;
        write_curve_csv(&dir.join("curve.csv"), &trained.curve)?;
        let mut manifest = Manifest::new(POLICY_STAGE, id, cfg);
        manifest.seed = Some(cfg.seed);
        manifest.sampler = Some(cfg.sampler);
        manifest.add_file(&dir, "policy.json")?;
        manifest.add_file(&dir, "curve.csv")?;
        manifest.write(&dir)?;
        dirs.push(dir);
    }
    Ok(dirs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: u32,
    pub method: String,
    pub t_min_mean: f64,
    pub t_min_std: f64,
    pub t_std_mean: f64,
    pub t_std_std: f64,
    pub t_cc_mean: f64,
    pub t_cc_std: f64,
}

impl SummaryRow {
    fn of(scenario: u32, method: &str, r: &KpiReport) -> Self {
        Self {
            scenario,
            method: method.to_string(),
            t_min_mean: r.t_min.mean,
            t_min_std: r.t_min.std,
            t_std_mean: r.t_std.mean,
            t_std_std: r.t_std.std,
            t_cc_mean: r.t_cc.mean,
            t_cc_std: r.t_cc.std,
        }
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    if rows.is_empty() {
        return write_string(path, &format!("{}\n", header.join(",")));
    }
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

const SUMMARY_HEADER: [&str; 8] = [
    "scenario",
    "method",
    "t_min_mean",
    "t_min_std",
    "t_std_mean",
    "t_std_std",
    "t_cc_mean",
    "t_cc_std",
];

fn write_timeseries(path: &Path, t: &Trajectory, kpi: &crate::kpi::KpiConfig) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["hour", "t_min", "t_std", "t_cc"])
        .map_err(|e| Error::csv(path, e))?;
    for (h, s) in t.states.iter().enumerate() {
        let k = SectorKpis::of(s, kpi);
        w.write_record([
            h.to_string(),
            k.t_min.to_string(),
            k.t_std.to_string(),
            k.t_cc.to_string(),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn policy_path(cfg: &RunConfig, id: u32, sampler: SamplerKind) -> PathBuf {
    cfg.policy_dir(id, sampler, cfg.seed).join("policy.json")
}

/// Evaluates every configured method on the evaluation seeds of every scenario.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    if cfg.methods.is_empty() {
        log::warn!("no methods configured; writing empty evaluation reports");
    }
    let network = Network::new(cfg.env.sim.clone())?;
    let mut dirs = Vec::new();
    for &id in &cfg.scenarios {
        let scenario = cfg.scenario(id)?;
        let dir = cfg.eval_dir(id);
        ensure_dir(&dir.join("timeseries"))?;
        let space = Env::with_network(Arc::clone(&network), cfg.env.clone())?.action_space();
        let mut rows = Vec::new();
        let mut manifest = Manifest::new(EVAL_STAGE, id, cfg);
        manifest.seed = Some(cfg.seed);
        for method in &cfg.methods {
            let (report, trajectories) = if method == "demos" {
                let demos = load_demos(cfg, id)?;
                let report = KpiReport::from_trajectories("demos", &demos.trajectories, &cfg.kpi)?;
                (report, demos.trajectories)
            } else {
                let mut make: Box<dyn FnMut(u64) -> Box<dyn Controller>> = match method.as_str() {
                    "ours" | "trex-contiguous" => {
                        let sampler = if method == "ours" {
                            SamplerKind::Tcs
                        } else {
                            SamplerKind::Contiguous
                        };
                        let policy = Arc::new(ActorCritic::load_json(&policy_path(cfg, id, sampler))?);
                        Box::new(move |_| {
                            Box::new(PolicyController::greedy(Arc::clone(&policy))) as Box<dyn Controller>
                        })
                    }
                    "fixed" => {
                        let fixed = match &cfg.fixed_action {
                            Some(a) => FixedController::new(space, a.clone())?,
                            None => FixedController::neutral(space),
                        };
                        Box::new(move |_| Box::new(fixed.clone()) as Box<dyn Controller>)
                    }
                    "adaptive" => {
                        let gain = cfg.adaptive_gain;
                        Box::new(move |_| {
                            Box::new(AdaptiveController::new(space, gain).expect("gain validated"))
                                as Box<dyn Controller>
                        })
                    }
                    other => return Err(Error::Config(format!("unknown method '{other}'"))),
                };
                log::info!("scenario {id}: evaluating {method}");
                let (mut report, trajectories) = evaluate_controller(
                    make.as_mut(),
                    Arc::clone(&network),
                    &cfg.env,
                    &scenario,
                    &cfg.eval_seeds,
                    &cfg.kpi,
                )?;
                report.controller = method.clone();
                (report, trajectories)
            };
            report.write_csv(&dir.join(format!("{method}.csv")))?;
            write_json(&dir.join(format!("{method}.json")), &report)?;
            manifest.add_file(&dir, &format!("{method}.csv"))?;
            manifest.add_file(&dir, &format!("{method}.json"))?;
            for t in &trajectories {
                let rel = format!("timeseries/{method}_seed{}.csv", t.seed);
                write_timeseries(&dir.join(&rel), t, &cfg.kpi)?;
                manifest.add_file(&dir, &rel)?;
            }
            rows.push(SummaryRow::of(id, method, &report));
        }
        write_rows(&dir.join("summary.csv"), &rows, &SUMMARY_HEADER)?;
        manifest.add_file(&dir, "summary.csv")?;
        manifest.write(&dir)?;
        dirs.push(dir);
    }
    Ok(dirs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TimeseriesRow {
    hour: usize,
    method: String,
    t_min: f64,
    t_std: f64,
    t_cc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PearsonRow {
    scenario: u32,
    sampler: SamplerKind,
    seed: u64,
    pearson_train: Option<f64>,
    pearson_extrap: Option<f64>,
    mislabel_rate: f64,
}

/// Consolidates evaluation and reward artifacts into `out/report`. Missing inputs are listed
/// in `report.md` rather than failing the command.
pub fn cmd_report(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let out = cfg.report_dir();
    ensure_dir(&out)?;
    let mut summary = Vec::new();
    let mut pearsons = Vec::new();
    let mut missing = Vec::new();
    let mut md = String::from("# Load-balancing report\n\n");
    md.push_str(&format!("config hash: `{}`\n\n", cfg.hash()));
    for &id in &cfg.scenarios {
        md.push_str(&format!(
            "## Scenario {id}\n\n| method | T_min | T_std | T_cc |\n|---|---|---|---|\n"
        ));
        let eval = cfg.eval_dir(id);
        let mut series = Vec::new();
        for method in &cfg.methods {
            let path = eval.join(format!("{method}.json"));
            if !path.exists() {
                missing.push(format!("scenario {id}: evaluation of {method} ({})", path.display()));
                md.push_str(&format!("| {method} | MISSING | MISSING | MISSING |\n"));
                continue;
            }
            let report: KpiReport = read_json(&path)?;
            let row = SummaryRow::of(id, method, &report);
            md.push_str(&format!(
                "| {method} | {:.3} ± {:.3} | {:.3} ± {:.3} | {:.3} ± {:.3} |\n",
                row.t_min_mean, row.t_min_std, row.t_std_mean, row.t_std_std, row.t_cc_mean, row.t_cc_std
            ));
            summary.push(row);
            series.extend(report.hourly.iter().map(|h| TimeseriesRow {
                hour: h.hour,
                method: method.clone(),
                t_min: h.t_min,
                t_std: h.t_std,
                t_cc: h.t_cc,
            }));
        }
        write_rows(
            &out.join(format!("timeseries_s{id}.csv")),
            &series,
            &["hour", "method", "t_min", "t_std", "t_cc"],
        )?;

        md.push_str(
            "\n| sampler | seed | Pearson train | Pearson extrapolation | mislabel rate |\n|---|---|---|---|---|\n",
        );
        let rewards = reward_summaries(cfg, id)?;
        if rewards.is_empty() {
            missing.push(format!("scenario {id}: reward models"));
            md.push_str("| MISSING | | | | |\n");
        }
        let fmt = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.3}"));
        for r in rewards {
            md.push_str(&format!(
                "| {} | {} | {} | {} | {:.3} |\n",
                r.sampler,
                r.seed,
                fmt(r.pearson_train),
                fmt(r.pearson_extrap),
                r.mislabel_rate
            ));
            let src = cfg.reward_dir(id, r.sampler, r.seed).join("scatter.csv");
            let dst = out.join(format!("scatter_s{id}_{}_seed{}.csv", r.sampler, r.seed));
            std::fs::copy(&src, &dst).map_err(|e| Error::io(&src, e))?;
            pearsons.push(PearsonRow {
                scenario: id,
                sampler: r.sampler,
                seed: r.seed,
                pearson_train: r.pearson_train,
                pearson_extrap: r.pearson_extrap,
                mislabel_rate: r.mislabel_rate,
            });
        }
        md.push('\n');
    }
    write_rows(&out.join("summary.csv"), &summary, &SUMMARY_HEADER)?;
    write_rows(
        &out.join("pearson.csv"),
        &pearsons,
        &[
            "scenario",
            "sampler",
            "seed",
            "pearson_train",
            "pearson_extrap",
            "mislabel_rate",
        ],
    )?;
    if missing.is_empty() {
        md.push_str("All sections present.\n");
    } else {
        md.push_str("## Missing sections\n\n");
        for m in &missing {
            md.push_str(&format!("- {m}\n"));
        }
    }
    write_string(&out.join("report.md"), &md)?;
    Ok(out)
}

/// SHA-256 of every file under `dir`, keyed by relative path.
pub fn artifact_digests(dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    visit(dir, dir, &mut out)?;
    Ok(out)
}

fn visit(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            visit(root, &p, out)?;
        } else {
            let rel = p.strip_prefix(root).expect("under root").to_string_lossy().into_owned();
            out.insert(rel, sha256_file(&p)?);
        }
    }
    Ok(())
}
