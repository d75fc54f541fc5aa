//! Bounded rewrite-based simplification and support filters.
//!
//! The rewrite set is deliberately small: constant folding, identity
//! elimination, double negation and sorting of flattened `add`/`mul`
//! chains. There is no algebraic cancellation (`y - y` stays) and no
//! trigonometric or logarithmic identity. Skeleton deduplication is only
//! as strong as this set, so datasets record [`REWRITE_SET_VERSION`].

use std::cmp::Ordering;

use thiserror::Error;

use crate::expr::{BinaryOp, Constant, Expr, UnaryOp};
use crate::sampler::GenerationConfig;

/// Bumped whenever the rewrite rules change.
pub const REWRITE_SET_VERSION: u32 = 1;

pub const MAX_PASSES: usize = 50;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimplifyError {
    #[error("constant folding produced a non-finite value")]
    NonFiniteFold,
}

/// Simplifies to a fixpoint of the rewrite set (at most [`MAX_PASSES`]).
pub fn simplify(e: &Expr) -> Result<Expr, SimplifyError> {
    let mut current = e.clone();
    for _ in 0..MAX_PASSES {
        let next = pass(&current)?;
        if next == current {
            return Ok(next);
        }
        current = next;
    }
    Ok(current)
}

/// True iff the simplified tree has no variable leaf.
pub fn is_constant_expr(e: &Expr) -> bool {
    match simplify(e) {
        Ok(s) => !s.contains_var(),
        Err(_) => !e.contains_var(),
    }
}

/// True iff every operator has positive sampling weight in `cfg` (unary
/// minus always allowed), every constant is finite and every all-constant
/// subtree evaluates to a finite value.
pub fn in_support(e: &Expr, cfg: &GenerationConfig) -> bool {
    match e {
        Expr::Var => true,
        Expr::Const(c) => c.value.is_finite(),
        Expr::Unary(op, a) => {
            let allowed = *op == UnaryOp::Neg || cfg.unary_weight(*op) > 0.0;
            allowed && in_support(a, cfg) && (e.contains_var() || e.evaluate(0.0).is_finite())
        }
        Expr::Binary(op, a, b) => {
            cfg.binary_weight(*op) > 0.0
                && in_support(a, cfg)
                && in_support(b, cfg)
                && (e.contains_var() || e.evaluate(0.0).is_finite())
        }
    }
}

fn folded(value: f64, integer: bool) -> Result<Expr, SimplifyError> {
    if !value.is_finite() {
        return Err(SimplifyError::NonFiniteFold);
    }
    Ok(Expr::Const(Constant {
        value,
        integer: integer && value.fract() == 0.0,
    }))
}

fn is_const(e: &Expr, v: f64) -> bool {
    matches!(e, Expr::Const(c) if c.value == v)
}

fn pass(e: &Expr) -> Result<Expr, SimplifyError> {
    match e {
        Expr::Var | Expr::Const(_) => Ok(e.clone()),
        Expr::Unary(op, a) => {
            let a = pass(a)?;
            if let Expr::Const(c) = &a {
                return folded(op.apply(c.value), c.integer && *op == UnaryOp::Neg);
            }
            if *op == UnaryOp::Neg {
                if let Expr::Unary(UnaryOp::Neg, inner) = a {
                    return Ok(*inner);
                }
            }
            Ok(Expr::unary(*op, a))
        }
        Expr::Binary(op, a, b) => {
            let a = pass(a)?;
            let b = pass(b)?;
            if let (Expr::Const(x), Expr::Const(y)) = (&a, &b) {
                return folded(op.apply(x.value, y.value), x.integer && y.integer);
            }
            match op {
                BinaryOp::Add | BinaryOp::Mul => chain(*op, a, b),
                BinaryOp::Sub if is_const(&b, 0.0) => Ok(a),
                BinaryOp::Div if is_const(&b, 1.0) => Ok(a),
                BinaryOp::Pow if is_const(&b, 0.0) => Ok(Expr::int(1)),
                BinaryOp::Pow if is_const(&b, 1.0) => Ok(a),
                _ => Ok(Expr::binary(*op, a, b)),
            }
        }
    }
}

fn flatten(op: BinaryOp, e: Expr, out: &mut Vec<Expr>) {
    match e {
        Expr::Binary(inner, a, b) if inner == op => {
            flatten(op, *a, out);
            flatten(op, *b, out);
        }
        other => out.push(other),
    }
}

/// Flattens an `add`/`mul` chain, folds its constants into one, drops the
/// identity and sorts the operands.
fn chain(op: BinaryOp, a: Expr, b: Expr) -> Result<Expr, SimplifyError> {
    let mut operands = Vec::new();
    flatten(op, a, &mut operands);
    flatten(op, b, &mut operands);

    let identity = if op == BinaryOp::Add { 0.0 } else { 1.0 };
    let mut acc: Option<Constant> = None;
    let mut rest = Vec::with_capacity(operands.len());
    for operand in operands {
        match operand {
            Expr::Const(c) => {
                acc = Some(match acc {
                    None => c,
                    Some(prev) => {
                        let value = op.apply(prev.value, c.value);
                        if !value.is_finite() {
                            return Err(SimplifyError::NonFiniteFold);
                        }
                        Constant {
                            value,
                            integer: prev.integer && c.integer && value.fract() == 0.0,
                        }
                    }
                });
            }
            other => rest.push(other),
        }
    }
    if op == BinaryOp::Mul && acc.is_some_and(|c| c.value == 0.0) {
        return Ok(Expr::int(0));
    }
    if let Some(c) = acc {
        if c.value != identity {
            rest.push(Expr::Const(c));
        }
    }
    rest.sort_by(canonical_order);
    let mut it = rest.into_iter();
    let first = it.next().unwrap_or(Expr::Const(Constant::int(identity as i64)));
    Ok(it.fold(first, |acc, x| Expr::binary(op, acc, x)))
}

fn kind_rank(e: &Expr) -> u8 {
    match e {
        Expr::Const(_) => 0,
        Expr::Var => 1,
        Expr::Unary(..) => 2,
        Expr::Binary(..) => 3,
    }
}

/// Total order on expressions: node kind, operator, then children
/// left to right; constants by value.
pub fn canonical_order(a: &Expr, b: &Expr) -> Ordering {
    kind_rank(a).cmp(&kind_rank(b)).then_with(|| match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => x.value.total_cmp(&y.value),
        (Expr::Unary(p, x), Expr::Unary(q, y)) => p.cmp(q).then_with(|| canonical_order(x, y)),
        (Expr::Binary(p, x1, x2), Expr::Binary(q, y1, y2)) => p
            .cmp(q)
            .then_with(|| canonical_order(x1, y1))
            .then_with(|| canonical_order(x2, y2)),
        _ => Ordering::Equal,
    })
}
