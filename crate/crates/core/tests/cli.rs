use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use symode::evalbench::{Aggregate, Regime};
use symode::expr::parse_infix;

fn symode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_symode")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn oracle_prediction_prints_a_parsable_top_line() {
    let tmp = tempfile::tempdir().unwrap();
    let traj = tmp.path().join("traj.csv");
    let rows: String = (0..20).map(|i| format!("{},{}\n", i as f64 * 0.1, (i as f64 * 0.1).exp())).collect();
    fs::write(&traj, format!("t,y\n{rows}")).unwrap();
    let out = symode(&["predict", "--oracle", "y*(1 - y)", "--traj", path(&traj)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let (score, infix) = stdout.lines().next().unwrap().split_once('\t').unwrap();
    score.parse::<f64>().unwrap();
    assert!(parse_infix(infix).is_ok(), "{infix}");
}

#[test]
fn noiseless_oracle_evaluation_has_unit_median() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("eval.json");
    fs::write(&cfg, r#"{"sigmas": [0.0], "ns": [128]}"#).unwrap();
    let out_dir = tmp.path().join("report");
    let out = symode(&["evaluate", "--oracle", "--testset", "textbook", "--eval-config", path(&cfg), "--out", path(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let aggregates: Vec<Aggregate> = serde_json::from_str(&fs::read_to_string(out_dir.join("aggregates.json")).unwrap()).unwrap();
    let r2 = aggregates
        .iter()
        .find(|a| a.regime == Regime::Interpolation && a.metric == "r2")
        .unwrap();
    assert_eq!(r2.median, Some(1.0));
    for f in ["rows.csv", "selections.csv", "fig_interpolation_r2.csv"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let rows = symode::evalbench::read_rows(&out_dir.join("rows.csv")).unwrap();
    assert_eq!(rows.len(), 24);
}

#[test]
fn failures_report_category_and_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.csv");
    let out = symode(&["predict", "--oracle", "y", "--traj", path(&missing)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[io]: "));

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"skeletons": 0}"#).unwrap();
    let corpus = tmp.path().join("corpus");
    let out = symode(&["generate", "--config", path(&bad), "--out", path(&corpus)]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[config]: "));
    assert!(!corpus.exists());

    let out = symode(&["predict", "--oracle", "y +", "--traj", path(&missing)]);
    assert_eq!(out.status.code(), Some(3));
    let out = symode(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seed_controls_generation() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("gen.json");
    fs::write(
        &cfg,
        r#"{"skeletons": 4, "generation": {"max_internal_nodes": 2, "constant_sets_per_skeleton": 1, "initial_values_per_ode": 2}, "solve": {"n_grid": 64}}"#,
    )
    .unwrap();
    let run = |seed: &str, name: &str| {
        let dir = tmp.path().join(name);
        let out = symode(&["--seed", seed, "generate", "--config", path(&cfg), "--out", path(&dir)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        fs::read(dir.join(symode::dataset::MANIFEST_FILE)).unwrap()
    };
    assert_eq!(run("5", "a"), run("5", "b"));
    assert_ne!(run("5", "a2"), run("6", "c"));

    let stats = symode(&["stats", path(&tmp.path().join("a"))]);
    assert!(stats.status.success(), "{}", String::from_utf8_lossy(&stats.stderr));
}
