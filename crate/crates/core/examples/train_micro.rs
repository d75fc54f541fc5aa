//! Trains the desk-size model on a tiny generated corpus and checks how
//! often beam search recovers the training equations.
//!
//! cargo run --release -p symode --example train_micro -- [records] [minutes]

use std::time::Instant;

use symode::canonicalize::simplify;
use symode::codec::{encode_input, Vocabulary};
use symode::dataset::{generate_dataset, DatasetConfig};
use symode::evalbench::select_candidate;
use symode::expr::{skeletonize, Expr};
use symode::model::{beam_search, evaluate_token_accuracy, prepare_example, train, ArchConfig, Model, TrainConfig};
use symode::sampler::GenerationConfig;

/// Same skeleton after simplification, constants within `cell`.
fn same_equation(pred: &Expr, truth: &Expr, cell: f64) -> bool {
    let (Ok(pred), Ok(truth)) = (simplify(pred), simplify(truth)) else {
        return false;
    };
    let (ps, pc) = skeletonize(&pred);
    let (ts, tc) = skeletonize(&truth);
    ps.key() == ts.key() && pc.iter().zip(&tc).all(|(a, b)| (a.value - b.value).abs() <= cell)
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let records: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let minutes: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(30.0);

    let cfg = DatasetConfig {
        skeletons: 12,
        max_records: Some(records),
        generation: GenerationConfig {
            max_internal_nodes: 3,
            constant_sets_per_skeleton: 5,
            initial_values_per_ode: 5,
            ..GenerationConfig::default()
        },
        ..DatasetConfig::default()
    };
    let ds = generate_dataset(&cfg, 7).expect("corpus");
    println!("corpus: {} records", ds.len());

    let tcfg = TrainConfig {
        batch_size: 16,
        warmup_steps: 50,
        peak_lr: 1e-3,
        epochs: std::env::var("EPOCHS").ok().and_then(|s| s.parse().ok()).unwrap_or(1000),
        n_points: 64,
        stop_at_token_accuracy: std::env::var("STOP").ok().and_then(|s| s.parse().ok()),
        time_budget_secs: Some(minutes * 60.0),
        ..TrainConfig::default()
    };
    let mut model = Model::new(ArchConfig::desk(), 0).expect("model");
    println!("parameters: {}", model.param_count());
    let outcome = train(&mut model, &ds, &tcfg).expect("training");
    println!(
        "trained {} steps / {} epochs in {:.0}s, last-epoch token accuracy {:.4}",
        outcome.steps, outcome.epochs, outcome.seconds, outcome.last_epoch_token_acc
    );

    let vocab = Vocabulary::standard();
    let examples: Vec<_> = ds
        .records()
        .iter()
        .map(|r| prepare_example(&ds, r, &vocab, &tcfg, 0).expect("example"))
        .collect();
    let acc = evaluate_token_accuracy(&model, &examples, 32).expect("forward");
    println!("teacher-forced token accuracy: {acc:.4}");

    let started = Instant::now();
    let (mut top, mut selected) = (0, 0);
    for r in ds.records() {
        let truth = r.expr().expect("stored expression parses");
        let (times, values) = ds.trajectory(r);
        let idx = symode::model::subsample_indices(times.len(), tcfg.n_points, tcfg.subsampling, &mut rand::rng());
        let obs: Vec<(f64, f64)> = idx.iter().map(|&i| (times[i], values[i])).collect();
        let beams = beam_search(&model, &encode_input(&obs), 32, 64).expect("beam search");
        let exprs: Vec<Expr> = beams.iter().filter_map(|c| c.expr.clone()).collect();
        if beams.first().and_then(|c| c.expr.as_ref()).is_some_and(|e| same_equation(e, &truth, 1.0)) {
            top += 1;
        } else if std::env::var("VERBOSE").is_ok() {
            let g = symode::model::greedy_decode(&model, &encode_input(&obs), 64).expect("greedy");
            println!(
                "  top miss: {} -> {:?} (greedy {:?})",
                r.infix,
                beams.first().map(|c| c.tokens.join(" ")),
                g.tokens.join(" ")
            );
            println!("    truth prefix {}", r.prefix.join(" "));
        }
        match select_candidate(&exprs, &obs, &cfg.solve) {
            Ok(c) if same_equation(&exprs[c.index], &truth, 1.0) => selected += 1,
            Ok(c) => println!("  miss: {} -> {}", r.infix, exprs[c.index].to_infix()),
            Err(e) => println!("  miss: {} ({e})", r.infix),
        }
    }
    let n = ds.len() as f64;
    println!(
        "recovered: top beam {:.3}, selected {:.3} ({:.0}s)",
        top as f64 / n,
        selected as f64 / n,
        started.elapsed().as_secs_f64()
    );
}
