use std::path::Path;

use lbirl::pipeline::io::read_json;
use lbirl::pipeline::{
    artifact_digests, cmd_collect_demos, cmd_evaluate, cmd_report, cmd_train_policy, cmd_train_reward, load_demos,
    sha256_file, Manifest, RewardSummary, RunConfig,
};
use lbirl::policy::KpiReport;
use lbirl::trex::SamplerKind;
use lbirl::Error;

fn tiny(out: &Path) -> RunConfig {
    let mut cfg = RunConfig {
        scenarios: vec![2],
        demo_count: 5,
        eval_seeds: vec![11, 12],
        out_dir: out.to_path_buf(),
        ..RunConfig::default()
    };
    cfg.env.horizon = 8;
    cfg.reward.pairs = 30;
    cfg.reward.epochs = 2;
    cfg.reward.subtrajectory_len = 3;
    cfg.reward.hidden = vec![6];
    cfg.ppo.total_timesteps = 32;
    cfg.ppo.n_steps = 16;
    cfg.ppo.batch_size = 8;
    cfg.ppo.epochs = 1;
    cfg.ppo.hidden = vec![6];
    cfg.ppo.episode_len = 8;
    cfg
}

fn assert_manifest_matches(dir: &Path, cfg: &RunConfig) {
    let m = Manifest::read(dir).unwrap();
    assert_eq!(m.config_hash, cfg.hash());
    assert!(!m.files.is_empty());
    for f in &m.files {
        assert_eq!(sha256_file(&dir.join(&f.path)).unwrap(), f.sha256, "{}", f.path);
    }
}

#[test]
fn stages_fail_with_missing_artifact_before_their_inputs_exist() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(tmp.path());
    assert!(matches!(cmd_train_reward(&cfg), Err(Error::MissingArtifact(_))));
    assert!(matches!(cmd_train_policy(&cfg), Err(Error::MissingArtifact(_))));
    let eval_ours = RunConfig {
        methods: vec!["ours".into()],
        ..cfg.clone()
    };
    assert!(matches!(cmd_evaluate(&eval_ours), Err(Error::MissingArtifact(_))));
    let eval_demos = RunConfig {
        methods: vec!["demos".into()],
        ..cfg
    };
    assert!(matches!(cmd_evaluate(&eval_demos), Err(Error::MissingArtifact(_))));
}

#[test]
fn invalid_configs_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny(tmp.path());
    cfg.reward.subtrajectory_len = 0;
    assert!(matches!(cmd_collect_demos(&cfg), Err(Error::Config(_))));
    let cfg = RunConfig {
        scenarios: vec![9],
        ..tiny(tmp.path())
    };
    assert!(matches!(cmd_collect_demos(&cfg), Err(Error::Config(_))));
}

#[test]
fn full_pipeline_writes_consistent_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(tmp.path());
    cmd_collect_demos(&cfg).unwrap();
    assert_manifest_matches(&cfg.demos_dir(2), &cfg);
    let demos = load_demos(&cfg, 2).unwrap();
    assert_eq!(demos.len(), 5);
    assert_eq!(demos.horizon(), 8);
    assert_eq!((demos.train().len(), demos.extrapolation().len()), (3, 2));

    for sampler in [SamplerKind::Tcs, SamplerKind::Contiguous] {
        let c = RunConfig { sampler, ..cfg.clone() };
        cmd_train_reward(&c).unwrap();
        let dir = c.reward_dir(2, sampler, 0);
        assert_manifest_matches(&dir, &c);
        let s: RewardSummary = read_json(&dir.join("extrapolation.json")).unwrap();
        assert_eq!(s.sampler, sampler);
        assert!((0.0..=1.0).contains(&s.mislabel_rate));
        cmd_train_policy(&c).unwrap();
        assert_manifest_matches(&c.policy_dir(2, sampler, 0), &c);
    }
    let comparison = std::fs::read_to_string(cfg.scenario_dir(2).join("reward/comparison.csv")).unwrap();
    assert_eq!(comparison.lines().count(), 3);

    cmd_evaluate(&cfg).unwrap();
    let eval = cfg.eval_dir(2);
    assert_manifest_matches(&eval, &cfg);
    for m in &cfg.methods {
        let r: KpiReport = read_json(&eval.join(format!("{m}.json"))).unwrap();
        assert_eq!(r.hourly.len(), 8);
        assert!(r.t_min.mean <= r.hourly.iter().map(|h| h.t_min).fold(f64::NEG_INFINITY, f64::max));
    }
    assert!(eval.join("timeseries/fixed_seed11.csv").exists());
    let summary = std::fs::read_to_string(eval.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + cfg.methods.len());

    let report = cmd_report(&cfg).unwrap();
    let md = std::fs::read_to_string(report.join("report.md")).unwrap();
    assert!(md.contains("All sections present."));
    assert!(report.join("scatter_s2_tcs_seed0.csv").exists());
    assert_eq!(
        std::fs::read_to_string(report.join("pearson.csv"))
            .unwrap()
            .lines()
            .count(),
        3
    );
}

#[test]
fn rerunning_a_stage_reproduces_its_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(tmp.path());
    cmd_collect_demos(&cfg).unwrap();
    cmd_train_reward(&cfg).unwrap();
    let first = artifact_digests(tmp.path()).unwrap();
    cmd_collect_demos(&cfg).unwrap();
    cmd_train_reward(&cfg).unwrap();
    assert_eq!(first, artifact_digests(tmp.path()).unwrap());

    let other = RunConfig { seed: 1, ..cfg.clone() };
    cmd_train_reward(&other).unwrap();
    let a = std::fs::read(cfg.reward_dir(2, SamplerKind::Tcs, 0).join("model.json")).unwrap();
    let b = std::fs::read(cfg.reward_dir(2, SamplerKind::Tcs, 1).join("model.json")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn two_demonstrations_split_one_and_one() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig {
        demo_count: 2,
        ..tiny(tmp.path())
    };
    cfg.reward.subtrajectory_len = 8;
    cmd_collect_demos(&cfg).unwrap();
    let demos = load_demos(&cfg, 2).unwrap();
    assert_eq!((demos.train().len(), demos.extrapolation().len()), (1, 1));
    // A single training trajectory cannot form a preference pair.
    assert!(matches!(cmd_train_reward(&cfg), Err(Error::Config(_))));
}

#[test]
fn report_lists_missing_sections() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(tmp.path());
    let out = cmd_report(&cfg).unwrap();
    let md = std::fs::read_to_string(out.join("report.md")).unwrap();
    assert!(md.contains("## Missing sections"));
    assert!(md.contains("evaluation of ours"));
    assert!(md.contains("reward models"));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1);
}

#[test]
fn evaluation_without_methods_writes_empty_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        methods: vec![],
        ..tiny(tmp.path())
    };
    cmd_evaluate(&cfg).unwrap();
    let summary = std::fs::read_to_string(cfg.eval_dir(2).join("summary.csv")).unwrap();
    assert!(summary.starts_with("scenario,method,"));
    assert_eq!(summary.lines().count(), 1);
}
