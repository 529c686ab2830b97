use std::path::{Path, PathBuf};
use std::process::Command;

use rulecritic_cli::{run_cli, Manifest, EXIT_DATA, EXIT_OK, EXIT_USAGE};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_rulecritic"));
    c.env_remove(rulecritic_cli::OUT_DIR_VAR);
    c
}

fn run(args: &[&str]) -> i32 {
    let mut v = vec!["rulecritic"];
    v.extend_from_slice(args);
    run_cli(v)
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    std::fs::write(
        &path,
        "[model]\nhidden = 8\nembed = 8\nhead = [16, 8]\nreturn_scale = 100.0\n\n\
         [training]\nrollout_steps = 64\nparallel_envs = 4\n\n[learning]\nepochs = 2\n",
    )
    .unwrap();
    path.display().to_string()
}

#[test]
fn version_exits_zero() {
    let out = bin().arg("version").output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("rulecritic "));
}

#[test]
fn train_without_scenarios_is_usage_error() {
    let out = bin().arg("train").output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    let out = bin().args(["train", "/nonexistent/a.rhscn"]).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn malformed_inputs_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = p(dir.path(), "bad.rhscn");
    std::fs::write(&bad, "RHSCN 9\n").unwrap();
    assert_eq!(run(&["replay", "--scenario", &bad, "--trajectory", &p(dir.path(), "t.csv")]), EXIT_DATA);

    let cfg = p(dir.path(), "bad.toml");
    std::fs::write(&cfg, "[model]\nwidth = 3\n").unwrap();
    assert_eq!(run(&["--config", &cfg, "version"]), EXIT_OK);
    let sc = p(dir.path(), "a.rhscn");
    assert_eq!(run(&["synth", "-o", &sc]), EXIT_OK);
    assert_eq!(run(&["--config", &cfg, "train", &sc]), EXIT_DATA);
    assert_eq!(run(&["--jobs", "0", "version"]), EXIT_USAGE);
}

#[test]
fn replay_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sc = p(d, "a.rhscn");
    assert_eq!(run(&["--seed", "5", "synth", "-o", &sc, "--sign"]), EXIT_OK);
    for k in ["1", "2"] {
        let code = run(&[
            "--seed",
            "9",
            "replay",
            "--scenario",
            &sc,
            "--trajectory",
            &p(d, &format!("traj{k}.csv")),
            "--trace",
            &p(d, &format!("trace{k}.csv")),
        ]);
        assert_eq!(code, EXIT_OK);
    }
    let read = |n: &str| std::fs::read(d.join(n)).unwrap();
    assert_eq!(read("traj1.csv"), read("traj2.csv"));
    assert_eq!(read("trace1.csv"), read("trace2.csv"));
    let traj = String::from_utf8(read("traj1.csv")).unwrap();
    assert!(traj.starts_with("step,t,x,y,s,d,speed,heading\n"));
    assert!(traj.lines().count() > 2);
    assert!(Manifest::path_for(&d.join("traj1.csv")).exists());
}

#[test]
fn evaluate_empty_road_has_no_violations() {
    let dir = tempfile::tempdir().unwrap();
    let sc = p(dir.path(), "empty.rhscn");
    assert_eq!(run(&["synth", "-o", &sc, "--vehicles", "0"]), EXIT_OK);
    let report = p(dir.path(), "report.json");
    assert_eq!(run(&["evaluate", "--scenario", &sc, "--episodes", "2", "-o", &report]), EXIT_OK);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    for rule in ["R_G1", "R_I6", "R_I2"] {
        assert_eq!(v["rules"][rule]["violations"], 0, "{rule}");
        assert!(v["rules"][rule]["min"].as_f64().unwrap() > 0.0);
    }
    assert!(v["episode_reward_mean"].as_f64().unwrap() > 0.0);
}

#[test]
fn train_writes_checkpoint_metrics_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = small_config(d);
    let sc = p(d, "a.rhscn");
    assert_eq!(run(&["--seed", "2", "synth", "-o", &sc, "--sign"]), EXIT_OK);

    // No steps: the initial critic is still written.
    let ck0 = p(d, "zero.rhnet");
    let m0 = p(d, "zero.csv");
    assert_eq!(run(&["--config", &cfg, "train", &sc, "--steps", "0", "--checkpoint", &ck0, "--metrics", &m0]), EXIT_OK);
    assert!(std::fs::read(&ck0).unwrap().starts_with(b"RHNET 1\n"));
    assert_eq!(std::fs::read_to_string(&m0).unwrap(), "update_round,explained_variance,episode_reward_mean,mean_loss\n");

    let mut logs = Vec::new();
    for k in 0..2 {
        let ck = p(d, &format!("c{k}.rhnet"));
        let m = p(d, &format!("m{k}.csv"));
        let code = run(&["--seed", "3", "--config", &cfg, "train", &sc, "--steps", "128", "--checkpoint", &ck, "--metrics", &m]);
        assert_eq!(code, EXIT_OK);
        logs.push((std::fs::read(&m).unwrap(), std::fs::read(&ck).unwrap()));
    }
    assert_eq!(logs[0], logs[1]);
    assert_eq!(String::from_utf8_lossy(&logs[0].0).lines().count(), 3);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(Manifest::path_for(&PathBuf::from(p(d, "c0.rhnet")))).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 3);
    assert!(manifest["derived_seeds"]["train.episodes"].is_u64());

    // The trained critic drives replay and heatmaps.
    let ck = p(d, "c0.rhnet");
    assert_eq!(run(&["replay", "--scenario", &sc, "--checkpoint", &ck, "--trajectory", &p(d, "t.csv"), "--trace", &p(d, "r.csv")]), EXIT_OK);
    let grid = p(d, "v.csv");
    assert_eq!(run(&["heatmap", "--scenario", &sc, "--quantity", "value", "--checkpoint", &ck, "--csv", &grid]), EXIT_OK);
    let g = rulecritic::eval::EvalGrid::from_csv(&std::fs::read_to_string(&grid).unwrap()).unwrap();
    assert_eq!(g.quantity, "value");
    assert_eq!(g.ego_speed, 25.0);
}

#[test]
fn heatmap_requires_output_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let sc = p(dir.path(), "a.rhscn");
    assert_eq!(run(&["synth", "-o", &sc]), EXIT_OK);
    assert_eq!(run(&["heatmap", "--scenario", &sc, "--quantity", "robustness"]), EXIT_USAGE);
    assert_eq!(run(&["heatmap", "--scenario", &sc, "--quantity", "value", "--csv", &p(dir.path(), "v.csv")]), EXIT_USAGE);
    assert_eq!(run(&["heatmap", "--scenario", &sc, "--quantity", "robustness", "--rule", "X9", "--csv", &p(dir.path(), "v.csv")]), EXIT_USAGE);
    let svg = p(dir.path(), "g.svg");
    assert_eq!(run(&["heatmap", "--scenario", &sc, "--quantity", "robustness", "--rule", "G1", "--svg", &svg]), EXIT_OK);
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn out_dir_override_relocates_relative_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .env(rulecritic_cli::OUT_DIR_VAR, dir.path())
        .args(["--seed", "1", "synth", "-o", "nested/s.rhscn", "--vehicles", "2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("nested/s.rhscn").exists());
    assert!(dir.path().join("nested/s.rhscn.manifest.json").exists());
}

#[test]
fn ingest_round_trips_synthetic_recording() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sc = rulecritic::scenario::generate_synthetic_scenario(&Default::default(), 8).unwrap();
    let (mut meta, mut tracks) = (Vec::new(), Vec::new());
    rulecritic::scenario::write_tracks_csv(&sc, 1, &mut meta, &mut tracks).unwrap();
    std::fs::write(d.join("meta.csv"), meta).unwrap();
    std::fs::write(d.join("tracks.csv"), tracks).unwrap();
    let out = p(d, "in.rhscn");
    let code = run(&["ingest", "--meta", &p(d, "meta.csv"), "--tracks", &p(d, "tracks.csv"), "-o", &out]);
    assert_eq!(code, EXIT_OK);
    let back = rulecritic::scenario::read_archive(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(back.tracks.len(), sc.tracks.len());
    assert_eq!(back.num_steps, sc.num_steps);
}
