use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use goalreach::config::RunConfig;

fn goalreach(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_goalreach")).args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Small, fast config written into `dir`.
fn quick_config(dir: &Path, tweak: impl FnOnce(&mut RunConfig)) -> PathBuf {
    let mut cfg = RunConfig { seed: 42, ..RunConfig::default() };
    cfg.benchmark.episodes = 30;
    cfg.benchmark.max_steps = 200;
    cfg.stabilizer.episodes = 5;
    cfg.eval.goals = 12;
    cfg.eval.moving_goals = 3;
    tweak(&mut cfg);
    let path = dir.join("run.toml");
    fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    path
}

fn train(cfg: &Path, out: &Path) -> PathBuf {
    let o = goalreach(&["train", "--config", p(cfg), "--out", p(out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    out.join("benchmark.json")
}

#[test]
fn zero_episode_training_gives_full_size_empty_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a");
    let o = goalreach(&["train", "--episodes", "0", "--seed", "3", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dump = goalreach(&["export", p(&out.join("benchmark.json"))]);
    assert!(dump.status.success());
    let text = stdout(&dump);
    assert!(text.contains("cells=155520"), "{text}");
    assert!(text.contains("nonzero=0"));
    let cfg = RunConfig::load(&out.join("config.toml")).unwrap();
    assert!(text.contains(&cfg.hash()));
    assert_eq!(cfg.seed, 3);
}

#[test]
fn same_seed_gives_identical_artifacts_and_logs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), |_| {});
    let a = train(&cfg, &dir.path().join("a"));
    let b = train(&cfg, &dir.path().join("b"));
    assert!(fs::read(&a).unwrap() == fs::read(&b).unwrap());
    assert_eq!(
        fs::read_to_string(dir.path().join("a/train_log.csv")).unwrap(),
        fs::read_to_string(dir.path().join("b/train_log.csv")).unwrap()
    );
    let c = dir.path().join("c");
    let o = goalreach(&["train", "--config", p(&cfg), "--seed", "43", "--out", p(&c)]);
    assert!(o.status.success());
    assert!(fs::read(&a).unwrap() != fs::read(c.join("benchmark.json")).unwrap());
}

#[test]
fn invalid_config_is_rejected_with_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), |c| {
        c.benchmark.alpha = 0.0;
        c.benchmark.gamma = 1.5;
    });
    let out = dir.path().join("never");
    let o = goalreach(&["train", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("alpha") && err.contains("gamma"), "{err}");
    assert!(!out.exists());

    let unknown = dir.path().join("bad.toml");
    fs::write(&unknown, "seed = 1\nnot_a_field = 2\n").unwrap();
    assert_eq!(goalreach(&["train", "--config", p(&unknown)]).status.code(), Some(1));
    assert_eq!(goalreach(&["train", "--rule", "tdlambda"]).status.code(), Some(1));
    assert_eq!(goalreach(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn artifact_problems_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), |c| c.benchmark.episodes = 0);
    let art = train(&cfg, &dir.path().join("a"));

    let text = fs::read_to_string(&art).unwrap().replacen("\"format_version\":1", "\"format_version\":9", 1);
    let future = dir.path().join("future.json");
    fs::write(&future, text).unwrap();
    let o = goalreach(&["export", p(&future)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("9") && stderr(&o).contains("supported: 1"), "{}", stderr(&o));

    let other = dir.path().join("theta12.toml");
    let mut c = RunConfig::load(&cfg).unwrap();
    c.benchmark.n_theta = 12;
    fs::write(&other, c.to_toml().unwrap()).unwrap();
    let o = goalreach(&["refine", p(&art), "--config", p(&other), "--out", p(&dir.path().join("r"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("e24") && err.contains("e12"), "{err}");

    assert_eq!(goalreach(&["export", p(&dir.path().join("missing.json"))]).status.code(), Some(2));
}

#[test]
fn refine_records_margin_override_and_flags_empty_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), |c| c.benchmark.episodes = 0);
    let art = train(&cfg, &dir.path().join("a"));
    let out = dir.path().join("r");
    let o = goalreach(&["refine", p(&art), "--nu-bar", "0.25", "--episodes", "3", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("empty"));
    let dump = stdout(&goalreach(&["export", p(&out.join("stabilizer.json"))]));
    assert!(dump.contains("nu_bar=0.25"), "{dump}");
    assert!(dump.contains("empty_benchmark=true"));
    let log = fs::read_to_string(out.join("refine_log.csv")).unwrap();
    assert!(log.starts_with("# seed=42 config_hash="));
    assert_eq!(log.lines().count(), 2 + 3);
}

#[test]
fn eval_of_two_artifacts_writes_the_full_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), |_| {});
    let art = train(&cfg, &dir.path().join("a"));
    let stab_dir = dir.path().join("s");
    assert!(goalreach(&["refine", p(&art), "--out", p(&stab_dir)]).status.success());
    let stab = stab_dir.join("stabilizer.json");

    let out = dir.path().join("e");
    let o = goalreach(&[
        "eval", p(&art), p(&stab), "--out", p(&out), "--export-heatmaps", "--export-trajectories",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("paired"));

    let stats = fs::read_to_string(out.join("stats.csv")).unwrap();
    let lines: Vec<_> = stats.lines().collect();
    assert!(lines[1].starts_with("# Benchmark RL: rule=qlearning episodes=30 seed=42"));
    assert!(lines[2].starts_with("# Stabilizer: rule=qlearning") && lines[2].contains("nu_bar=0.01"));
    assert_eq!(lines[3], "Metric,Benchmark RL,Stabilizer");
    assert!(stats.contains("Success rate (%)"));
    let episodes = fs::read_to_string(out.join("episodes.csv")).unwrap();
    assert_eq!(episodes.lines().count(), 2 + 2 * 12);
    for name in ["episodes.csv", "stats.csv", "trajectories.csv", "heatmaps/visitation.csv", "heatmaps/stabilizer_cost.csv"] {
        let text = fs::read_to_string(out.join(name)).unwrap();
        assert!(text.starts_with("# seed=42 config_hash="), "{name}");
    }
    let visits = fs::read_to_string(out.join("heatmaps/visitation.csv")).unwrap();
    assert!(visits.lines().nth(1).unwrap().ends_with("log10_value"));
    assert_eq!(visits.lines().count(), 2 + 36 * 24);

    // rerun into another directory: byte-identical episode file
    let again = dir.path().join("e2");
    assert!(goalreach(&["eval", p(&art), p(&stab), "--out", p(&again)]).status.success());
    assert_eq!(fs::read_to_string(out.join("episodes.csv")).unwrap(), fs::read_to_string(again.join("episodes.csv")).unwrap());
}

#[test]
fn moving_mode_runs_a_goal_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), |c| c.benchmark.max_steps = 100);
    let art = train(&cfg, &dir.path().join("a"));
    let out = dir.path().join("m");
    let o = goalreach(&["eval", p(&art), "--mode", "moving", "--goals", "4", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let episodes = fs::read_to_string(out.join("episodes.csv")).unwrap();
    let rows = episodes.lines().count() - 2;
    // a sequence stops early only after leaving the workspace
    assert!((1..=4).contains(&rows));
    if rows < 4 {
        assert!(episodes.lines().last().unwrap().contains("out_of_bounds"));
    }
}
