use proptest::prelude::*;
use symode::dataset::textbook_testset;
use symode::evalbench::{metrics, select_candidate, recompute_aggregates, run_benchmark, EvalConfig, OraclePredictor, Regime, RowStatus};
use symode::solver::SolveConfig;

fn median_of(report: &symode::evalbench::EvalReport, sigma: f64, regime: Regime, metric: &str) -> Option<f64> {
    report
        .aggregates
        .iter()
        .find(|a| a.sigma == sigma && a.regime == regime && a.metric == metric)
        .and_then(|a| a.median)
}

#[test]
fn oracle_on_textbook_is_perfect_without_noise() {
    let ds = textbook_testset(&SolveConfig::default());
    let cfg = EvalConfig {
        sigmas: vec![0.0],
        ns: vec![128],
        ..Default::default()
    };
    let report = run_benchmark(&OraclePredictor::default(), &ds, &cfg, 0).unwrap();
    assert_eq!(report.rows.len(), ds.len() * 2);
    assert_eq!(median_of(&report, 0.0, Regime::Interpolation, "r2"), Some(1.0));
    assert!(median_of(&report, 0.0, Regime::Extrapolation, "r2").unwrap() >= 0.999);
    assert_eq!(recompute_aggregates(&report.rows), report.aggregates);
}

#[test]
fn oracle_with_distractors_keeps_truth_under_noise() {
    let ds = textbook_testset(&SolveConfig::default());
    let cfg = EvalConfig {
        sigmas: vec![0.01],
        ns: vec![128, 256],
        ..Default::default()
    };
    let report = run_benchmark(&OraclePredictor { distractors: true }, &ds, &cfg, 3).unwrap();
    assert_eq!(report.selections.len(), ds.len() * 2);
    for n in [128, 256] {
        let hits = report.selections.iter().filter(|s| s.n == n && s.index == Some(0)).count();
        assert!(hits >= 11, "n = {n}: truth kept for {hits} of 12");
    }
    assert!(report.rows.iter().all(|r| r.status != RowStatus::TruthUnavailable));
    // scores are taken against the clean reference, so picking the truth is
    // a perfect interpolation score whatever the noise
    for s in report.selections.iter().filter(|s| s.index == Some(0)) {
        let row = report
            .rows
            .iter()
            .find(|r| r.id == s.id && r.n == s.n && r.regime == Regime::Interpolation)
            .unwrap();
        assert!(row.r2 == 1.0 || row.status == RowStatus::ZeroVariance, "{row:?}");
    }
}

#[test]
fn benchmark_is_deterministic() {
    let ds = textbook_testset(&SolveConfig::default());
    let cfg = EvalConfig {
        sigmas: vec![0.02],
        ns: vec![64],
        ..Default::default()
    };
    let p = OraclePredictor { distractors: true };
    let a = run_benchmark(&p, &ds, &cfg, 11).unwrap();
    let b = run_benchmark(&p, &ds, &cfg, 11).unwrap();
    assert_eq!(format!("{:?}", a.rows), format!("{:?}", b.rows));
    assert_eq!(a.selections, b.selections);
}

fn first_argmax(v: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in v.iter().enumerate() {
        if x.is_finite() && best.is_none_or(|b| x > v[b]) {
            best = Some(i);
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn selection_is_a_member_and_monotone_invariant(k in 0.2f64..2.0, c in -1.0f64..1.0, y0 in 0.5f64..3.0, rot in 0usize..5) {
        let mut cands: Vec<symode::expr::Expr> = [
            format!("-{k}*y"),
            format!("{c}*y"),
            format!("-{k}*y + {c}"),
            "sin(y)".to_string(),
            format!("y**2*{c}"),
        ]
        .iter()
        .map(|s| symode::expr::parse_infix(s).unwrap())
        .collect();
        let obs: Vec<(f64, f64)> = (0..40).map(|i| {
            let t = i as f64 * 0.05;
            (t, y0 * (-k * t).exp())
        }).collect();
        let solve = SolveConfig::default();
        let choice = select_candidate(&cands, &obs, &solve).unwrap();
        prop_assert!(choice.index < cands.len());
        prop_assert_eq!(choice.scores.len(), cands.len());
        prop_assert_eq!(Some(choice.index), first_argmax(&choice.scores));
        for f in [|x: f64| 3.0 * x + 1.0, |x: f64| x.exp(), |x: f64| x.atan()] {
            let mapped: Vec<f64> = choice.scores.iter().map(|&s| if s.is_finite() { f(s) } else { s }).collect();
            prop_assert_eq!(first_argmax(&mapped), Some(choice.index));
        }
        let picked = cands[choice.index].clone();
        cands.rotate_left(rot);
        let again = select_candidate(&cands, &obs, &solve).unwrap();
        prop_assert_eq!(&cands[again.index], &picked);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn metric_ranges_and_equivariance(
        pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 2..50),
        seed in any::<u64>(),
    ) {
        let (pred, truth): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        let m = metrics(&pred, &truth, 1e-10, 0.05).unwrap();
        prop_assert!(m.zero_variance || m.r2 <= 1.0);
        prop_assert!((0.0..=1.0).contains(&m.isclose));
        let mut idx: Vec<usize> = (0..pairs.len()).collect();
        rand::seq::SliceRandom::shuffle(&mut idx[..], &mut symode::seed::stream("metric-perm", seed, &[]));
        let pp: Vec<f64> = idx.iter().map(|&i| pred[i]).collect();
        let tp: Vec<f64> = idx.iter().map(|&i| truth[i]).collect();
        let q = metrics(&pp, &tp, 1e-10, 0.05).unwrap();
        prop_assert_eq!(m.isclose, q.isclose);
        prop_assert_eq!(m.linf, q.linf);
        prop_assert!((m.l1 - q.l1).abs() <= 1e-12 * m.l1.max(1.0));
        prop_assert!(m.zero_variance == q.zero_variance);
        if !m.zero_variance {
            prop_assert!((m.r2 - q.r2).abs() <= 1e-9 * m.r2.abs().max(1.0));
        }
    }
}
