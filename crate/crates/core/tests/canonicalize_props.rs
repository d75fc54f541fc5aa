use proptest::prelude::*;
use symode::canonicalize::simplify;
use symode::expr::Expr;
use symode::sampler::{sample_expr, GenerationConfig};
use symode::seed;

fn generated(s: u64, k: usize) -> Expr {
    let cfg = GenerationConfig {
        max_internal_nodes: k,
        ..GenerationConfig::default()
    };
    sample_expr(&cfg, &mut seed::stream("canon-props", s, &[]))
}

#[test]
fn simplification_preserves_values() {
    let mut rng = seed::stream("canon-y", 0, &[]);
    let mut compared = 0;
    for s in 0..1000u64 {
        let e = generated(s, 1 + (s % 6) as usize);
        let Ok(simple) = simplify(&e) else { continue };
        for _ in 0..100 {
            let y: f64 = rand::Rng::random_range(&mut rng, -5.0..5.0);
            let (a, b) = (e.evaluate(y), simple.evaluate(y));
            if a.is_nan() || b.is_nan() {
                continue;
            }
            compared += 1;
            assert!(
                (a - b).abs() <= 1e-9 * a.abs().max(1.0),
                "{} -> {} at y={y}: {a} vs {b}",
                e.to_infix(),
                simple.to_infix()
            );
        }
    }
    assert!(compared > 30_000, "only {compared} finite comparisons");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn idempotent(s in any::<u64>(), k in 0usize..8) {
        if let Ok(once) = simplify(&generated(s, k)) {
            prop_assert_eq!(simplify(&once).unwrap(), once);
        }
    }

    #[test]
    fn never_grows(s in any::<u64>(), k in 0usize..8) {
        let e = generated(s, k);
        if let Ok(simple) = simplify(&e) {
            prop_assert!(simple.complexity() <= e.complexity(), "{} -> {}", e.to_infix(), simple.to_infix());
        }
    }
}
