use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sample_expr, GenerationConfig, SampleError};
use crate::canonicalize::{in_support, simplify};
use crate::expr::{skeletonize, Constant, Expr, Skeleton};
use crate::seed;

/// Pool filling gives up after this many attempts per requested skeleton.
pub const POOL_ATTEMPT_FACTOR: usize = 10;

const CHUNK: usize = 512;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolStats {
    pub attempts: usize,
    pub non_finite: usize,
    pub out_of_support: usize,
    pub constant: usize,
    pub duplicate: usize,
}

#[derive(Debug, Clone)]
pub struct SkeletonPool {
    /// Skeletons in acceptance order, each with the constants of the
    /// simplified expression that produced it.
    pub skeletons: Vec<(Skeleton, Vec<Constant>)>,
    pub stats: PoolStats,
}

enum Outcome {
    NonFinite,
    OutOfSupport,
    Constant,
    Candidate(Skeleton, Vec<Constant>),
}

fn attempt(cfg: &GenerationConfig, seed: u64, index: u64) -> Outcome {
    let mut rng = seed::stream("skeleton-pool", seed, &[index]);
    let raw = sample_expr(cfg, &mut rng);
    let Ok(simplified) = simplify(&raw) else {
        return Outcome::NonFinite;
    };
    accept_simplified(&simplified, cfg)
}

fn accept_simplified(e: &Expr, cfg: &GenerationConfig) -> Outcome {
    if !in_support(e, cfg) {
        return Outcome::OutOfSupport;
    }
    if !e.contains_var() {
        return Outcome::Constant;
    }
    let (skeleton, constants) = skeletonize(e);
    Outcome::Candidate(skeleton, constants)
}

/// Samples, simplifies and deduplicates skeletons until `target` distinct
/// ones are found. Attempt `i` draws from the stream `(seed, i)`, and
/// candidates are inserted in attempt order, so the pool does not depend on
/// the rayon thread count.
pub fn sample_skeleton_pool(
    cfg: &GenerationConfig,
    target: usize,
    seed: u64,
) -> Result<SkeletonPool, SampleError> {
    cfg.validate()?;
    let budget = target.max(1) * POOL_ATTEMPT_FACTOR;
    let mut seen = HashSet::new();
    let mut pool = SkeletonPool {
        skeletons: Vec::with_capacity(target),
        stats: PoolStats::default(),
    };
    let mut next = 0usize;
    while pool.skeletons.len() < target && next < budget {
        let end = (next + CHUNK).min(budget);
        let outcomes: Vec<Outcome> = (next..end)
            .into_par_iter()
            .map(|i| attempt(cfg, seed, i as u64))
            .collect();
        for outcome in outcomes {
            if pool.skeletons.len() >= target {
                break;
            }
            pool.stats.attempts += 1;
            match outcome {
                Outcome::NonFinite => pool.stats.non_finite += 1,
                Outcome::OutOfSupport => pool.stats.out_of_support += 1,
                Outcome::Constant => pool.stats.constant += 1,
                Outcome::Candidate(skeleton, constants) => {
                    if seen.insert(skeleton.key().to_string()) {
                        pool.skeletons.push((skeleton, constants));
                    } else {
                        pool.stats.duplicate += 1;
                    }
                }
            }
        }
        next = end;
    }
    if pool.skeletons.len() < target {
        return Err(SampleError::PoolBudgetExhausted {
            attempts: pool.stats.attempts,
            found: pool.skeletons.len(),
            target,
        });
    }
    Ok(pool)
}
