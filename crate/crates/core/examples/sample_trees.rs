//! Draws random unary-binary trees, decorates them with operators and
//! leaves, and shows the skeletons that survive simplification.
//!
//! cargo run -p symode --example sample_trees -- [K] [count]

use symode::canonicalize::simplify;
use symode::expr::skeletonize;
use symode::sampler::{count_shapes, sample_expr, sample_skeleton_pool, GenerationConfig};
use symode::seed;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let k: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let count: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(8);
    let cfg = GenerationConfig {
        max_internal_nodes: k,
        ..GenerationConfig::default()
    };

    println!("shapes by internal-node count: {:?}", count_shapes(k));
    let mut rng = seed::stream("example-trees", 0, &[]);
    for _ in 0..count {
        let raw = sample_expr(&cfg, &mut rng);
        match simplify(&raw) {
            Ok(e) => println!("{:<40} -> {:<30} skeleton {}", raw.to_infix(), e.to_infix(), skeletonize(&e).0.key()),
            Err(err) => println!("{:<40} -> ({err})", raw.to_infix()),
        }
    }

    let pool = sample_skeleton_pool(&cfg, 50, 0).expect("pool");
    println!("\n50 distinct skeletons after {} attempts: {:?}", pool.stats.attempts, pool.stats);
    for (s, c) in pool.skeletons.iter().take(5) {
        println!("  {}  ({} constants)", s.key(), c.len());
    }
}
