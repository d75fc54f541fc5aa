//! Runs the benchmark protocol on the textbook set with the ground-truth
//! stub (optionally with wrong candidates mixed in) and writes the report.
//!
//! cargo run --release -p symode --example oracle_benchmark -- [out_dir]

use std::path::PathBuf;

use symode::dataset::textbook_testset;
use symode::evalbench::{emit_report, run_benchmark, EvalConfig, OraclePredictor};
use symode::solver::SolveConfig;

fn main() {
    let dir = std::env::args().nth(1).map(PathBuf::from);
    let ds = textbook_testset(&SolveConfig::default());
    let cfg = EvalConfig::default();
    let report = run_benchmark(&OraclePredictor { distractors: true }, &ds, &cfg, 0).expect("benchmark");

    for a in report.aggregates.iter().filter(|a| a.metric == "r2" || a.metric == "isclose") {
        println!(
            "sigma {:<6} n {:<4} {:<14} {:<8} median {:?} over {}",
            a.sigma,
            a.n,
            a.regime.name(),
            a.metric,
            a.median,
            a.count
        );
    }
    let kept = report.selections.iter().filter(|s| s.index == Some(0)).count();
    println!("truth selected in {kept} of {} cells", report.selections.len());
    if let Some(dir) = dir {
        emit_report(&report, &dir).expect("write report");
        println!("report written to {}", dir.display());
    }
}
