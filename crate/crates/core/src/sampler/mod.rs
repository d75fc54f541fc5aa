//! Random ODE right-hand sides as decorated unary-binary trees.
//!
//! Shapes are drawn uniformly over all unary-binary trees with at most `K`
//! internal nodes by exact counting and unranking, then decorated with
//! operators, the variable and constants.

mod constants;
mod pool;
mod shape;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{BinaryOp, Constant, Expr, UnaryOp};

pub use constants::{resample_constants, rule_violation, Rule, MAX_CONSTANT_RETRIES};
pub use pool::{sample_skeleton_pool, PoolStats, SkeletonPool, POOL_ATTEMPT_FACTOR};
pub use shape::{count_shapes, sample_shape, unrank_shape, TreeShape};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SampleError {
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error("no admissible constant after {retries} draws for slot {slot}")]
    ConstantRetriesExhausted { slot: usize, retries: usize },
    #[error("constant list has {got} values but the skeleton has {expected} slots")]
    SlotMismatch { expected: usize, got: usize },
    #[error("attempt budget of {attempts} exhausted with {found} of {target} skeletons")]
    PoolBudgetExhausted {
        attempts: usize,
        found: usize,
        target: usize,
    },
}

/// Prior over generated expressions. Defaults reproduce the reference
/// generation parameters (K = 5, uniform operator choice, p_sym = 0.5).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    /// Maximum number of internal nodes `K` per tree.
    pub max_internal_nodes: usize,
    pub binary_operators: BTreeMap<BinaryOp, f64>,
    pub unary_operators: BTreeMap<UnaryOp, f64>,
    /// Probability that a leaf is the variable.
    pub p_sym: f64,
    /// Probability that a constant leaf is an integer rather than a real.
    pub p_integer: f64,
    /// Inclusive integer range; zero is excluded.
    pub integer_range: (i64, i64),
    /// Open real interval.
    pub real_range: (f64, f64),
    pub constant_sets_per_skeleton: usize,
    pub initial_values_per_ode: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            max_internal_nodes: 5,
            binary_operators: BinaryOp::ALL.into_iter().map(|op| (op, 0.2)).collect(),
            unary_operators: UnaryOp::SAMPLED.into_iter().map(|op| (op, 0.2)).collect(),
            p_sym: 0.5,
            p_integer: 0.5,
            integer_range: (-10, 10),
            real_range: (-10.0, 10.0),
            constant_sets_per_skeleton: 25,
            initial_values_per_ode: 25,
        }
    }
}

fn check_distribution<K: std::fmt::Debug>(name: &str, dist: &BTreeMap<K, f64>) -> Result<(), SampleError> {
    if dist.values().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(SampleError::InvalidConfig(format!("{name}: negative or non-finite weight")));
    }
    let total: f64 = dist.values().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(SampleError::InvalidConfig(format!("{name}: probabilities sum to {total}")));
    }
    Ok(())
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), SampleError> {
        if self.max_internal_nodes < 1 {
            return Err(SampleError::InvalidConfig("max_internal_nodes must be >= 1".into()));
        }
        if self.max_internal_nodes > shape::MAX_COUNTED_NODES {
            return Err(SampleError::InvalidConfig(format!(
                "max_internal_nodes must be <= {}",
                shape::MAX_COUNTED_NODES
            )));
        }
        check_distribution("binary_operators", &self.binary_operators)?;
        check_distribution("unary_operators", &self.unary_operators)?;
        if self.unary_operators.contains_key(&UnaryOp::Neg) {
            return Err(SampleError::InvalidConfig("neg is never sampled".into()));
        }
        for (name, p) in [("p_sym", self.p_sym), ("p_integer", self.p_integer)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SampleError::InvalidConfig(format!("{name} must lie in [0, 1]")));
            }
        }
        let (lo, hi) = self.integer_range;
        if lo > hi || (lo == 0 && hi == 0) {
            return Err(SampleError::InvalidConfig("integer_range has no nonzero value".into()));
        }
        let (lo, hi) = self.real_range;
        if !(lo < hi) {
            return Err(SampleError::InvalidConfig("real_range is empty".into()));
        }
        Ok(())
    }

    pub fn binary_weight(&self, op: BinaryOp) -> f64 {
        self.binary_operators.get(&op).copied().unwrap_or(0.0)
    }

    pub fn unary_weight(&self, op: UnaryOp) -> f64 {
        self.unary_operators.get(&op).copied().unwrap_or(0.0)
    }
}

fn pick<K: Copy, R: Rng + ?Sized>(dist: &BTreeMap<K, f64>, rng: &mut R) -> K {
    let total: f64 = dist.values().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = None;
    for (&k, &p) in dist {
        if p <= 0.0 {
            continue;
        }
        if u < p {
            return k;
        }
        u -= p;
        last = Some(k);
    }
    last.expect("distribution has positive mass")
}

/// Which half of the constant ranges to draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Sign {
    Any,
    Positive,
    Negative,
}

/// Draws a nonzero constant: integer or real with probability `p_integer`.
pub(crate) fn sample_constant<R: Rng + ?Sized>(
    cfg: &GenerationConfig,
    sign: Sign,
    rng: &mut R,
) -> Option<Constant> {
    let (ilo, ihi) = cfg.integer_range;
    let (ilo, ihi) = match sign {
        Sign::Any => (ilo, ihi),
        Sign::Positive => (ilo.max(1), ihi),
        Sign::Negative => (ilo, ihi.min(-1)),
    };
    let (rlo, rhi) = cfg.real_range;
    let (rlo, rhi) = match sign {
        Sign::Any => (rlo, rhi),
        Sign::Positive => (rlo.max(0.0), rhi),
        Sign::Negative => (rlo, rhi.min(0.0)),
    };
    let has_int = ilo <= ihi && !(ilo == 0 && ihi == 0);
    let has_real = rlo < rhi;
    let want_int = match (has_int, has_real) {
        (false, false) => return None,
        (true, false) => true,
        (false, true) => false,
        (true, true) => rng.random::<f64>() < cfg.p_integer,
    };
    if want_int {
        // uniform over the nonzero integers in [ilo, ihi]
        let zero_inside = ilo <= 0 && 0 <= ihi;
        let count = (ihi - ilo + 1) as u64 - u64::from(zero_inside);
        let k = rng.random_range(0..count) as i64;
        let mut v = ilo + k;
        if zero_inside && v >= 0 {
            v += 1;
        }
        Some(Constant::int(v))
    } else {
        loop {
            let v = rng.random_range(rlo..rhi);
            // open interval, zero excluded
            if v != 0.0 && v != rlo {
                return Some(Constant::real(v));
            }
        }
    }
}

/// Assigns operators and leaves to a shape.
pub fn decorate<R: Rng + ?Sized>(shape: &TreeShape, cfg: &GenerationConfig, rng: &mut R) -> Expr {
    match shape {
        TreeShape::Leaf => {
            if rng.random::<f64>() < cfg.p_sym {
                Expr::Var
            } else {
                Expr::Const(sample_constant(cfg, Sign::Any, rng).expect("validated constant ranges"))
            }
        }
        TreeShape::Unary(child) => {
            let op = pick(&cfg.unary_operators, rng);
            Expr::unary(op, decorate(child, cfg, rng))
        }
        TreeShape::Binary(left, right) => {
            let op = pick(&cfg.binary_operators, rng);
            let a = decorate(left, cfg, rng);
            let b = decorate(right, cfg, rng);
            Expr::binary(op, a, b)
        }
    }
}

/// Shape then decoration in one draw.
pub fn sample_expr<R: Rng + ?Sized>(cfg: &GenerationConfig, rng: &mut R) -> Expr {
    let shape = sample_shape(cfg.max_internal_nodes, rng);
    decorate(&shape, cfg, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn default_config_is_valid() {
        GenerationConfig::default().validate().unwrap();
        let mut bad = GenerationConfig::default();
        bad.binary_operators.insert(BinaryOp::Add, 0.5);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_json_uses_operator_names() {
        let json = serde_json::to_value(GenerationConfig::default()).unwrap();
        assert_eq!(json["binary_operators"]["pow"], 0.2);
        assert_eq!(json["unary_operators"]["sqrt"], 0.2);
        let back: GenerationConfig = serde_json::from_value(json).unwrap();
        assert_eq!(back, GenerationConfig::default());
        let partial: GenerationConfig = serde_json::from_str(r#"{"max_internal_nodes": 3}"#).unwrap();
        assert_eq!(partial.max_internal_nodes, 3);
        assert_eq!(partial.p_sym, 0.5);
    }

    #[test]
    fn forced_constant_leaf_is_in_range_and_nonzero() {
        let cfg = GenerationConfig {
            p_sym: 0.0,
            ..GenerationConfig::default()
        };
        let mut rng = seed::stream("test", 0, &[]);
        for _ in 0..10_000 {
            let Expr::Const(c) = decorate(&TreeShape::Leaf, &cfg, &mut rng) else {
                panic!("leaf must be a constant");
            };
            assert!(c.value != 0.0 && (-10.0..=10.0).contains(&c.value));
            if c.integer {
                assert_eq!(c.value.fract(), 0.0);
            }
        }
    }

    #[test]
    fn signed_integer_draws_skip_zero() {
        let cfg = GenerationConfig {
            p_integer: 1.0,
            integer_range: (-1, 1),
            ..GenerationConfig::default()
        };
        let mut rng = seed::stream("test", 1, &[]);
        let mut seen = [0usize; 2];
        for _ in 0..1000 {
            let c = sample_constant(&cfg, Sign::Any, &mut rng).unwrap();
            seen[usize::from(c.value > 0.0)] += 1;
            assert!(c.value == 1.0 || c.value == -1.0);
        }
        assert!(seen[0] > 400 && seen[1] > 400);
        assert_eq!(sample_constant(&cfg, Sign::Negative, &mut rng).unwrap().value, -1.0);
    }
}
