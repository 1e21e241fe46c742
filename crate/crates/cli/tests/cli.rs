use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rwt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rwt")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: &[&str] = &["--set", "env.side=3", "--set", "env.horizon=3"];

fn train(dir: &Path, variant: &str, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--variant", variant, "--episodes", "3", "--seeds", "2", "--out-dir", p(dir)];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    rwt(&args)
}

#[test]
fn train_writes_one_csv_row_per_episode() {
    let dir = tempfile::tempdir().unwrap();
    let o = rwt(&["train", "--episodes", "1", "--seeds", "1", "--out-dir", p(dir.path()), "--set", "env.side=3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("rwt_tabular_seed0.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2, "{csv}");
    assert!(dir.path().join("summary_rwt_tabular.json").exists());
    let manifest = fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .any(|e| e.file_name().to_string_lossy().contains("manifest"));
    assert!(manifest);
}

#[test]
fn missing_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = rwt(&["train", "--config", "/nonexistent/cfg.txt", "--out-dir", p(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("/nonexistent/cfg.txt"));
}

#[test]
fn unknown_keys_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.txt");
    fs::write(&cfg, "episodes = 2\nlearning_rate = 0.1\n").unwrap();
    let o = rwt(&["train", "--config", p(&cfg), "--out-dir", p(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("learning_rate"));
}

#[test]
fn bad_values_and_usage_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&train(dir.path(), "not_a_variant", &[])), 2);
    assert_eq!(code(&rwt(&["train"])), 2);
    assert_eq!(code(&rwt(&["no-such-command"])), 2);
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.txt");
    fs::write(&cfg, "# small run\nvariant = target_only\nepisodes = 2\nenv.side = 3\n").unwrap();
    let o = rwt(&["train", "--config", p(&cfg), "--seeds", "0,3", "--out-dir", p(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(dir.path().join("target_only_seed3.csv").exists());
    assert!(!dir.path().join("target_only_seed1.csv").exists());
}

#[test]
fn compare_merges_matching_runs_and_rejects_mismatched_environments() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert_eq!(code(&train(&a, "rwt_tabular", &[])), 0);
    assert_eq!(code(&train(&b, "target_only", &[])), 0);
    assert_eq!(code(&train(&c, "target_only", &["--set", "env.seed=9"])), 0);
    let sa = a.join("summary_rwt_tabular.json");
    let sb = b.join("summary_target_only.json");
    let sc = c.join("summary_target_only.json");
    let out = dir.path().join("cmp.csv");

    let o = rwt(&["compare", p(&sa), p(&sb), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let merged = fs::read_to_string(&out).unwrap();
    assert!(merged.contains("rwt_tabular") && merged.contains("target_only"));

    let o = rwt(&["compare", p(&sa), p(&sc), "--out", p(&dir.path().join("bad.csv"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn gen_env_then_collect_source() {
    let dir = tempfile::tempdir().unwrap();
    let env = dir.path().join("env.json");
    let mut args = vec!["gen-env", "--out", p(&env)];
    args.extend_from_slice(SMALL);
    let o = rwt(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let pool = |name: &str| {
        let out = dir.path().join(name);
        let o = rwt(&["collect-source", "--env", p(&env), "--episodes", "4", "--seed", "7", "--out", p(&out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        fs::read_to_string(out).unwrap()
    };
    let first = pool("p1.json");
    assert_eq!(first, pool("p2.json"));
    let parsed: serde_json::Value = serde_json::from_str(&first).unwrap();
    assert!(parsed.as_array().is_some_and(|a| !a.is_empty()));

    let o = rwt(&["collect-source", "--env", p(&dir.path().join("none.json")), "--out", p(&dir.path().join("x.json"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn diagnostics_need_the_kernel_variant() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("diag.json");
    let o = rwt(&["diagnostics", "--variant", "rwt_tabular", "--out", p(&out)]);
    assert_eq!(code(&o), 2);

    let o = rwt(&["diagnostics", "--variant", "rwt_kernel_ofu", "--episodes", "2", "--seeds", "1", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let records = v[0]["records"].as_array().unwrap();
    assert!(!records.is_empty());
    assert!(records[0]["information_gain"].as_f64().unwrap() >= 0.0);
}

#[test]
fn verify_suites() {
    for suite in ["alignment", "lemmas", "krr"] {
        let o = rwt(&["verify", suite]);
        assert_eq!(code(&o), 0, "{suite}: {}", String::from_utf8_lossy(&o.stdout));
        assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));
    }
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    assert_eq!(code(&rwt(&["verify", "optimism", "--out", p(&report)])), 0);
    assert!(report.exists());

    let o = rwt(&["verify", "everything"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("alignment"));
}
