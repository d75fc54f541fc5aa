mod common;

use proptest::prelude::*;
use symode::expr::{skeletonize, Expr};
use symode::sampler::{resample_constants, sample_expr, sample_shape, sample_skeleton_pool, GenerationConfig};
use symode::seed;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn decorated_constants_are_nonzero(s in any::<u64>(), k in 0usize..8) {
        let cfg = GenerationConfig { max_internal_nodes: k, ..GenerationConfig::default() };
        let e = sample_expr(&cfg, &mut seed::stream("sampler-props", s, &[]));
        let mut ok = true;
        e.visit_preorder(&mut |n| if let Expr::Const(c) = n { ok &= c.value != 0.0 });
        prop_assert!(ok, "{}", e.to_infix());
    }

    #[test]
    fn shape_sizes_bounded(s in any::<u64>(), k in 0usize..10) {
        let shape = sample_shape(k, &mut seed::stream("sampler-shape", s, &[]));
        prop_assert!(shape.internal_nodes() <= k);
        prop_assert!(common::shape_word(&shape).len() <= 2 * k + 1);
    }

    #[test]
    fn resampling_respects_roles(s in any::<u64>()) {
        let cfg = GenerationConfig::default();
        let mut rng = seed::stream("sampler-resample", s, &[]);
        let e = sample_expr(&cfg, &mut rng);
        let (skeleton, constants) = skeletonize(&e);
        if let Ok(fresh) = resample_constants(&skeleton, &constants, &cfg, &mut rng) {
            prop_assert_eq!(common::audit_constants(&e, &fresh), vec![]);
        }
    }
}

#[test]
fn pool_is_deterministic() {
    let cfg = GenerationConfig::default();
    let a = sample_skeleton_pool(&cfg, 60, 11).unwrap();
    let b = sample_skeleton_pool(&cfg, 60, 11).unwrap();
    let keys = |p: &symode::sampler::SkeletonPool| p.skeletons.iter().map(|(s, c)| (s.key().to_string(), c.clone())).collect::<Vec<_>>();
    assert_eq!(keys(&a), keys(&b));
    assert_eq!(a.stats, b.stats);
    let c = sample_skeleton_pool(&cfg, 60, 12).unwrap();
    assert_ne!(keys(&a), keys(&c));
}
