use std::process::Command;

use hai_sr::envs::Environment;
use hai_sr::harness::artifact::RunArtifact;
use hai_sr::harness::config::ExperimentConfig;
use hai_sr::harness::experiments::{seed_rng, train_fully, EnvBox};
use hai_sr::planner::{run_episode, Agent};

fn hai_sr(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_hai-sr")).args(args).output().unwrap()
}

#[test]
fn artifact_reload_replays_the_same_trajectory() {
    let cfg = ExperimentConfig::preset("E1").unwrap();
    let tr = train_fully(&cfg, 3, EnvBox::build(&cfg).unwrap()).unwrap();
    let planner = tr.planner(&tr.env.goal_observations()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    RunArtifact::from_planner(&planner, &cfg.hash(), 3).save(dir.path()).unwrap();
    let loaded = RunArtifact::load(dir.path()).unwrap();
    assert_eq!(loaded.manifest.config_hash, cfg.hash());
    let reloaded = loaded.to_planner().unwrap();
    assert_eq!(reloaded, planner);

    let mut env = EnvBox::build(&cfg).unwrap();
    let a = run_episode(&mut env, Agent::Hierarchical(&planner), cfg.step_cap, &mut seed_rng(3, 1)).unwrap();
    let b = run_episode(&mut env, Agent::Hierarchical(&reloaded), cfg.step_cap, &mut seed_rng(3, 1)).unwrap();
    assert_eq!(a.trajectory, b.trajectory);
    assert!(a.success);
}

#[test]
fn list_experiments_succeeds() {
    let out = hai_sr(&["list-experiments"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("E1") && text.contains("E8"));
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for args in [
        vec!["train", "--experiment", "E99", "--out", out],
        vec!["train", "--experiment", "E1", "--set", "gamma=1.5", "--out", out],
        vec!["train", "--experiment", "E1", "--set", "nonsense=1", "--out", out],
    ] {
        let res = hai_sr(&args);
        assert_eq!(res.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&res.stderr));
    }
}

#[test]
fn eval_without_artifacts_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let res = hai_sr(&["eval", "--experiment", "E1", "--seeds", "1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn train_then_eval_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let res = hai_sr(&["train", "--experiment", "E1", "--seeds", "1", "--set", "eval_episodes=5", "--out", out]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    for f in ["config.txt", "metrics.csv", "summary.csv", "clusters.csv", "policy_maps.csv", "reward.svg", "artifacts/seed_0/manifest.txt"] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
    let res = hai_sr(&["eval", "--experiment", "E1", "--seeds", "1", "--out", out]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(dir.path().join("eval.csv").exists());
}
