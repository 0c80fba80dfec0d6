use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"{
  "scenarios": [3],
  "demo_count": 3,
  "eval_seeds": [21],
  "methods": ["fixed", "adaptive", "demos"],
  "env": {"horizon": 6},
  "reward": {"pairs": 20, "epochs": 1, "subtrajectory_len": 2, "hidden": [4]},
  "ppo": {"total_timesteps": 12, "n_steps": 6, "batch_size": 3, "epochs": 1, "hidden": [4], "episode_len": 6}
}"#;

fn lbirl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lbirl"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn tiny_config(dir: &Path) -> String {
    let path = dir.join("tiny.json");
    std::fs::write(&path, TINY).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn usage_errors_exit_with_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&lbirl(tmp.path(), &[])), 2);
    assert_eq!(code(&lbirl(tmp.path(), &["collect-demos", "--sampler", "random"])), 2);
    assert_eq!(code(&lbirl(tmp.path(), &["bogus"])), 2);
}

#[test]
fn bad_configs_exit_with_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&lbirl(tmp.path(), &["collect-demos", "--config", "absent.json"])),
        2
    );
    std::fs::write(tmp.path().join("bad.json"), r#"{"unknown_knob": 1}"#).unwrap();
    assert_eq!(code(&lbirl(tmp.path(), &["collect-demos", "--config", "bad.json"])), 2);
    std::fs::write(tmp.path().join("small.json"), r#"{"demo_count": 1}"#).unwrap();
    assert_eq!(
        code(&lbirl(tmp.path(), &["collect-demos", "--config", "small.json"])),
        2
    );
    assert_eq!(code(&lbirl(tmp.path(), &["report", "--scenario", "7"])), 2);
}

#[test]
fn missing_upstream_artifacts_exit_with_code_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    for cmd in ["train-reward", "train-policy", "evaluate"] {
        let o = lbirl(tmp.path(), &[cmd, "--config", &cfg, "--out", "run"]);
        assert_eq!(code(&o), 3, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stderr).contains("missing upstream artifact"));
    }
}

#[test]
fn pipeline_runs_end_to_end_and_flags_override_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let run = |cmd: &str, extra: &[&str]| {
        let mut args = vec![cmd, "--config", cfg.as_str(), "--out", "run", "--seed", "4"];
        args.extend_from_slice(extra);
        let o = lbirl(tmp.path(), &args);
        assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    };
    run("collect-demos", &[]);
    run("train-reward", &["--sampler", "contiguous"]);
    run("train-policy", &["--sampler", "contiguous"]);
    run("evaluate", &[]);
    run("report", &[]);
    let out = tmp.path().join("run");
    assert!(out.join("s3/demos/traj_002.json").exists());
    assert!(out.join("s3/reward/contiguous_seed4/model.json").exists());
    assert!(out.join("s3/policy/contiguous_seed4/policy.json").exists());
    assert!(out.join("s3/eval/adaptive.csv").exists());
    let md = std::fs::read_to_string(out.join("report/report.md")).unwrap();
    assert!(md.contains("| contiguous | 4 |"));

    let o = lbirl(
        tmp.path(),
        &["collect-demos", "--config", &cfg, "--out", "other", "--scenario", "1,4"],
    );
    assert_eq!(code(&o), 0);
    assert!(tmp.path().join("other/s1/demos/manifest.json").exists());
    assert!(tmp.path().join("other/s4/demos/manifest.json").exists());
    assert!(!tmp.path().join("other/s3").exists());
}
