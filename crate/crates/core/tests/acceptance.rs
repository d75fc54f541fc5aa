//! Acceptance checks. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any fails. Tolerances are fixed here.

mod common;

use std::collections::HashMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use symode::canonicalize::simplify;
use symode::codec::{constant_row, decode_step, encode_input, encode_target, row_logits, Decoded, Row, Vocabulary};
use symode::dataset::{generate_dataset, textbook_testset, DatasetConfig};
use symode::evalbench::{metrics, run_benchmark, EvalConfig, EvalReport, OraclePredictor, Regime};
use symode::expr::{skeletonize, Expr};
use symode::model::{
    beam_search, evaluate_token_accuracy, prepare_example, train, Activation, ArchConfig, ForwardInput, Model,
    TrainConfig,
};
use symode::sampler::{resample_constants, sample_shape, sample_skeleton_pool, GenerationConfig};
use symode::seed;
use symode::solver::{approx_derivative, fd_weights, linspace, quality_check, Qc, SolveConfig, SolveStatus, Trajectory};

const LOSSLESS_TOL: f64 = 1e-12;
const LOSSLESS_BUDGET_SECS: f64 = 1.0;
const CHI2_MIN_P: f64 = 0.001;
const SOLVER_TOL: f64 = 1e-6;
const FORNBERG_TOL: f64 = 1e-12;
const POLY_REL_TOL: f64 = 1e-9;
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_ABS_FLOOR: f64 = 1e-8;
const MIN_TOKEN_ACC: f64 = 0.95;
const MIN_RECOVERY: f64 = 0.90;
const TRAIN_BUDGET_SECS: f64 = 30.0 * 60.0;
const MIN_EXTRAPOLATION_R2: f64 = 0.999;
const MIN_TRUTH_KEPT: usize = 11;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn two_hot_lossless() -> Check {
    let vocab = Vocabulary::standard();
    let mut rng = seed::stream("acceptance-two-hot", 0, &[]);
    let cs: Vec<f64> = (0..10_000).map(|_| rng.random_range(-10.0..=10.0)).collect();
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    for &c in &cs {
        let row = constant_row(&vocab, c).map_err(|e| e.to_string())?;
        let Decoded::Constant { value, .. } = decode_step(&vocab, &row_logits(&row, vocab.len())) else {
            return Err(format!("{c} decoded to a symbol"));
        };
        worst = worst.max((value - c).abs());
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(
        worst <= LOSSLESS_TOL && secs < LOSSLESS_BUDGET_SECS,
        format!("max error {worst:.2e} over 10^4 constants in {secs:.3}s"),
    )
}

fn shape_uniformity() -> Check {
    let mut details = Vec::new();
    let mut ok = true;
    for k in 1..=3 {
        let words = common::enumerate_shape_words(k);
        let mut counts: HashMap<Vec<u8>, u64> = words.iter().map(|w| (w.clone(), 0)).collect();
        let mut rng = seed::stream("acceptance-shapes", k as u64, &[]);
        let draws = 100_000u64;
        for _ in 0..draws {
            let w = common::shape_word(&sample_shape(k, &mut rng));
            *counts.get_mut(&w).ok_or_else(|| format!("K={k}: sampled shape {w:?} outside enumeration"))? += 1;
        }
        let expected = draws as f64 / words.len() as f64;
        let chi2: f64 = counts.values().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
        let p = ChiSquared::new((words.len() - 1) as f64).unwrap().sf(chi2);
        ok &= p > CHI2_MIN_P;
        details.push(format!("K={k}: {} shapes, chi2 {chi2:.1}, p {p:.3}", words.len()));
    }
    ensure(ok, details.join("; "))
}

fn constant_rules() -> Check {
    let cfg = GenerationConfig::default();
    let pool = sample_skeleton_pool(&cfg, 1000, 0).map_err(|e| e.to_string())?;
    let mut rng = seed::stream("acceptance-resample", 0, &[]);
    let (mut audited, mut violations, mut exhausted) = (0, 0, 0);
    'outer: loop {
        for (skeleton, constants) in &pool.skeletons {
            if audited >= 100_000 {
                break 'outer;
            }
            let original = skeleton.instantiate(constants).unwrap();
            match resample_constants(skeleton, constants, &cfg, &mut rng) {
                Ok(fresh) => {
                    violations += common::audit_constants(&original, &fresh).len();
                    audited += 1;
                }
                Err(_) => exhausted += 1,
            }
        }
    }
    ensure(
        violations == 0,
        format!("{audited} instantiations audited, {violations} violations ({exhausted} retry exhaustions)"),
    )
}

fn solver_accuracy() -> Check {
    let ds = textbook_testset(&SolveConfig::default());
    let final_value = |name: &str| -> Result<f64, String> {
        let r = ds
            .records()
            .iter()
            .find(|r| r.name.as_deref() == Some(name))
            .ok_or(format!("{name} missing"))?;
        Ok(*ds.trajectory(r).1.last().unwrap())
    };
    let interest = final_value("compound interest")?;
    let tank = final_value("Tank draining")?;
    let (ei, et) = ((interest - 4.9 * 0.2f64.exp()).abs(), (tank - 0.6241).abs());
    ensure(
        ei <= SOLVER_TOL && et <= SOLVER_TOL,
        format!("compound interest error {ei:.2e}, tank draining error {et:.2e}"),
    )
}

fn fd_machinery() -> Check {
    let mut worst_w: f64 = 0.0;
    for pos in 0..9i64 {
        let offsets: Vec<i64> = (0..9).map(|j| j - pos).collect();
        let wide: Vec<i128> = offsets.iter().map(|&o| o as i128).collect();
        let got = fd_weights(&offsets, 1).map_err(|e| e.to_string())?;
        for (g, w) in got.iter().zip(common::fornberg_exact(&wide, 1)) {
            worst_w = worst_w.max((g - w.to_f64()).abs());
        }
    }

    let mut rng = seed::stream("acceptance-poly", 0, &[]);
    let mut worst_poly: f64 = 0.0;
    let cfg = SolveConfig::default();
    for _ in 0..20 {
        let coeffs: Vec<f64> = (0..9).map(|_| rng.random_range(-3.0..3.0)).collect();
        let times = linspace(0.0, cfg.t_end, cfg.n_grid);
        let p = |t: f64| coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c);
        let dp = |t: f64| coeffs.iter().enumerate().skip(1).rev().fold(0.0, |acc, (k, &c)| acc * t + k as f64 * c);
        let traj = Trajectory {
            values: times.iter().map(|&t| p(t)).collect(),
            y0: p(0.0),
            times: times.clone(),
            status: SolveStatus::Ok,
            qc: Qc::NotRun,
        };
        let d = approx_derivative(&traj).map_err(|e| e.to_string())?;
        let scale = times.iter().map(|&t| dp(t).abs()).fold(0.0, f64::max);
        let err = d.iter().zip(&times).map(|(a, &t)| (a - dp(t)).abs()).fold(0.0, f64::max);
        worst_poly = worst_poly.max(err / scale);
    }

    let dcfg = DatasetConfig {
        skeletons: 40,
        ..DatasetConfig::default()
    };
    let ds = generate_dataset(&dcfg, 0).map_err(|e| e.to_string())?;
    let mut failed = 0;
    for r in ds.records() {
        if !quality_check(&ds.trajectory_of(r), &r.expr().unwrap(), 1.0).passed {
            failed += 1;
        }
    }
    let r = &ds.records()[0];
    let mut spiked = ds.trajectory_of(r);
    let mid = spiked.len() / 2;
    spiked.values[mid] += 10.0;
    let spike = quality_check(&spiked, &r.expr().unwrap(), 1.0);
    ensure(
        worst_w <= FORNBERG_TOL && worst_poly <= POLY_REL_TOL && failed == 0 && !spike.passed,
        format!(
            "weights off by {worst_w:.1e}, degree-8 relative error {worst_poly:.1e}, {failed}/{} corpus records fail QC, spike max error {:.1}",
            ds.len(),
            spike.max_error
        ),
    )
}

fn metric_fidelity() -> Check {
    let m = metrics(&[1.0, 2.0, 4.0], &[1.0, 2.0, 3.0], 1e-10, 0.05).map_err(|e| e.to_string())?;
    ensure(
        m.r2 == 0.5 && m.l1 == 1.0 && m.linf == 1.0 && m.isclose == 2.0 / 3.0,
        format!("R2 {} L1 {} Linf {} closeness {}", m.r2, m.l1, m.linf, m.isclose),
    )
}

fn gradient_check() -> Check {
    let arch = ArchConfig {
        encoder_layers: 1,
        decoder_layers: 1,
        heads: 3,
        d_model: 3,
        d_ff: 4,
        activation: Activation::Gelu,
        max_input_len: 4,
        max_target_len: 6,
    };
    let mut rng = seed::stream("acceptance-grad", 0, &[]);
    let mut worst: f64 = 0.0;
    let mut params = 0;
    let mut two_hot_rows = 0;
    for pair in 0..10u64 {
        let mut m = Model::new(arch.clone(), pair).map_err(|e| e.to_string())?;
        params = m.param_count();
        let n = rng.random_range(2..=4);
        let points: Vec<(f64, f64)> = (0..n).map(|i| (i as f64 * 0.3, rng.random_range(-3.0..3.0))).collect();
        let c = format!("{:.3}", rng.random_range(-9.5..9.5));
        let words: [Vec<&str>; 3] = [vec!["mul", &c, "y"], vec!["add", "y", &c], vec!["sin", &c]];
        let word = &words[(pair % 3) as usize];
        let enc = encode_target(&m.vocab, word).map_err(|e| e.to_string())?;
        two_hot_rows += enc.targets().iter().filter(|r| r.second.is_some()).count();
        let bits = encode_input(&points);
        let input = ForwardInput {
            bits: &bits,
            n,
            dec_rows: enc.inputs(),
            t: enc.inputs().len(),
            groups: 1,
        };
        let targets: Vec<Option<Row>> = enc.targets().iter().copied().map(Some).collect();
        let (_, grads, _) = m.loss_and_grads(&input, &targets).map_err(|e| e.to_string())?;
        let h = 1e-5;
        for (p, grad) in grads.iter().enumerate() {
            for i in 0..m.params[p].data.len() {
                let orig = m.params[p].data[i];
                m.params[p].data[i] = orig + h;
                let up = m.loss(&input, &targets).unwrap();
                m.params[p].data[i] = orig - h;
                let down = m.loss(&input, &targets).unwrap();
                m.params[p].data[i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = grad.data[i];
                let gap = (numeric - analytic).abs();
                let allowed = GRAD_REL_TOL * numeric.abs().max(analytic.abs()) + GRAD_ABS_FLOOR;
                worst = worst.max(gap / allowed);
            }
        }
    }
    ensure(
        worst <= 1.0 && params <= 1000 && two_hot_rows > 0,
        format!("{params} parameters, 10 pairs, {two_hot_rows} two-hot rows, worst gap {worst:.3} of allowance"),
    )
}

/// Same skeleton after simplification, constants within one grid cell.
fn same_equation(pred: &Expr, truth: &Expr) -> bool {
    let (Ok(pred), Ok(truth)) = (simplify(pred), simplify(truth)) else {
        return false;
    };
    let (ps, pc) = skeletonize(&pred);
    let (ts, tc) = skeletonize(&truth);
    ps.key() == ts.key() && pc.iter().zip(&tc).all(|(a, b)| (a.value - b.value).abs() <= 1.0)
}

fn desk_learning() -> Check {
    let cfg = DatasetConfig {
        skeletons: 12,
        max_records: Some(200),
        generation: GenerationConfig {
            max_internal_nodes: 3,
            constant_sets_per_skeleton: 5,
            initial_values_per_ode: 5,
            ..GenerationConfig::default()
        },
        ..DatasetConfig::default()
    };
    let ds = generate_dataset(&cfg, 7).map_err(|e| e.to_string())?;
    let tcfg = TrainConfig {
        batch_size: 16,
        warmup_steps: 50,
        peak_lr: 1e-3,
        epochs: 1000,
        n_points: 64,
        stop_at_token_accuracy: Some(0.999),
        time_budget_secs: Some(TRAIN_BUDGET_SECS),
        ..TrainConfig::default()
    };
    let mut model = Model::new(ArchConfig::desk(), 0).map_err(|e| e.to_string())?;
    let outcome = train(&mut model, &ds, &tcfg).map_err(|e| e.to_string())?;
    let vocab = Vocabulary::standard();
    let examples: Vec<_> = ds
        .records()
        .iter()
        .map(|r| prepare_example(&ds, r, &vocab, &tcfg, 0).unwrap())
        .collect();
    let acc = evaluate_token_accuracy(&model, &examples, 32).map_err(|e| e.to_string())?;
    let mut recovered = 0;
    for (r, ex) in ds.records().iter().zip(&examples) {
        let truth = r.expr().unwrap();
        let beams = beam_search(&model, &ex.bits, 32, 64).map_err(|e| e.to_string())?;
        if beams.first().and_then(|c| c.expr.as_ref()).is_some_and(|e| same_equation(e, &truth)) {
            recovered += 1;
        }
    }
    let recovery = recovered as f64 / ds.len() as f64;
    ensure(
        ds.len() == 200 && acc >= MIN_TOKEN_ACC && recovery >= MIN_RECOVERY && outcome.seconds <= TRAIN_BUDGET_SECS,
        format!(
            "{} records, {} epochs in {:.0}s, token accuracy {acc:.4}, top-beam recovery {recovery:.3}",
            ds.len(),
            outcome.epochs,
            outcome.seconds
        ),
    )
}

fn median(report: &EvalReport, regime: Regime) -> Option<f64> {
    report
        .aggregates
        .iter()
        .find(|a| a.regime == regime && a.metric == "r2")
        .and_then(|a| a.median)
}

fn oracle_harness() -> Check {
    let ds = textbook_testset(&SolveConfig::default());
    let clean = EvalConfig {
        sigmas: vec![0.0],
        ns: vec![128],
        ..EvalConfig::default()
    };
    let report = run_benchmark(&OraclePredictor::default(), &ds, &clean, 0).map_err(|e| e.to_string())?;
    let (interp, extra) = (median(&report, Regime::Interpolation), median(&report, Regime::Extrapolation));
    let noisy = EvalConfig {
        sigmas: vec![0.01],
        ..EvalConfig::default()
    };
    let report = run_benchmark(&OraclePredictor { distractors: true }, &ds, &noisy, 0).map_err(|e| e.to_string())?;
    let kept: Vec<(usize, usize)> = noisy
        .ns
        .iter()
        .map(|&n| (n, report.selections.iter().filter(|s| s.n == n && s.index == Some(0)).count()))
        .collect();
    ensure(
        ds.len() == 12
            && interp == Some(1.0)
            && extra.is_some_and(|e| e >= MIN_EXTRAPOLATION_R2)
            && kept.iter().all(|&(_, k)| k >= MIN_TRUTH_KEPT),
        format!("sigma 0: median R2 interp {interp:?} extrap {extra:?}; sigma 0.01 truth kept (n, of 12): {kept:?}"),
    )
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = tmp.path().join("generate.json");
    fs::write(&cfg, r#"{"skeletons": 20, "generation": {"max_internal_nodes": 3}}"#).unwrap();
    let eval_cfg = tmp.path().join("eval.json");
    fs::write(&eval_cfg, r#"{"sigmas": [0.0, 0.01], "ns": [128]}"#).unwrap();
    let run = |args: &[&str]| -> Result<(), String> {
        let out = Command::new(env!("CARGO_BIN_EXE_symode"))
            .args(args)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), String::from_utf8_lossy(&out.stderr).into_owned()).map(|_| ())
    };
    let p = |name: &str| tmp.path().join(name).to_string_lossy().into_owned();
    for threads in ["1", "2"] {
        for run_id in ["a", "b"] {
            let corpus = p(&format!("corpus-{threads}-{run_id}"));
            run(&["--seed", "42", "--threads", threads, "generate", "--config", &p("generate.json"), "--out", &corpus])?;
            for testset in ["textbook".to_string(), corpus.clone()] {
                let tag = if testset == "textbook" { "textbook" } else { "corpus" };
                let out = p(&format!("eval-{tag}-{threads}-{run_id}"));
                run(&[
                    "--seed", "42", "--threads", threads, "evaluate", "--oracle", "--distractors", "--testset", &testset,
                    "--eval-config", &p("eval.json"), "--out", &out,
                ])?;
            }
        }
    }
    let mut compared = 0;
    for threads in ["1", "2"] {
        for prefix in ["corpus", "eval-textbook", "eval-corpus"] {
            let a = read_tree(Path::new(&p(&format!("{prefix}-{threads}-a"))));
            let b = read_tree(Path::new(&p(&format!("{prefix}-{threads}-b"))));
            if a != b {
                return Err(format!("{prefix} with {threads} thread(s) differs between runs"));
            }
            compared += a.len();
        }
    }
    Ok(format!("{compared} files byte-identical across repeated runs (1 and 2 threads)"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("two-hot losslessness", two_hot_lossless),
        ("tree-shape uniformity", shape_uniformity),
        ("constant-rule audit", constant_rules),
        ("solver accuracy", solver_accuracy),
        ("finite-difference machinery", fd_machinery),
        ("metric fidelity", metric_fidelity),
        ("gradient check", gradient_check),
        ("desk-scale learning", desk_learning),
        ("oracle harness", oracle_harness),
        ("determinism", determinism),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if only.is_some_and(|k| k != i + 1) {
            continue;
        }
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
