use rand::Rng;

use super::{sample_constant, GenerationConfig, SampleError, Sign};
use crate::expr::{Constant, Expr, Skeleton, SlotRole};

pub const MAX_CONSTANT_RETRIES: usize = 100;

/// Constraints on resampled constants that keep the skeleton unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    NonZero,
    SameSign,
    PowerBaseNotOne,
    PowerExponentNotUnit,
    CoefficientNotUnit,
    DivisorNotUnit,
}

/// First rule a candidate replacement breaks, if any. An original of zero
/// counts as positive.
pub fn rule_violation(role: SlotRole, original: f64, candidate: f64) -> Option<Rule> {
    if candidate == 0.0 {
        return Some(Rule::NonZero);
    }
    if (original < 0.0) != (candidate < 0.0) {
        return Some(Rule::SameSign);
    }
    let unit = candidate == 1.0 || candidate == -1.0;
    match role {
        SlotRole::PowerBase if candidate == 1.0 => Some(Rule::PowerBaseNotOne),
        SlotRole::PowerExponent if unit => Some(Rule::PowerExponentNotUnit),
        SlotRole::Coefficient if unit => Some(Rule::CoefficientNotUnit),
        SlotRole::Divisor if unit => Some(Rule::DivisorNotUnit),
        _ => None,
    }
}

/// Instantiates `skeleton` with fresh constants drawn from the generation
/// prior, rejecting draws that break a [`Rule`] for their slot.
pub fn resample_constants<R: Rng + ?Sized>(
    skeleton: &Skeleton,
    original: &[Constant],
    cfg: &GenerationConfig,
    rng: &mut R,
) -> Result<Expr, SampleError> {
    if original.len() != skeleton.slot_count() {
        return Err(SampleError::SlotMismatch {
            expected: skeleton.slot_count(),
            got: original.len(),
        });
    }
    let roles = skeleton.slot_roles();
    let mut fresh = Vec::with_capacity(original.len());
    for (slot, (role, orig)) in roles.iter().zip(original).enumerate() {
        let sign = if orig.value < 0.0 {
            Sign::Negative
        } else {
            Sign::Positive
        };
        let mut accepted = None;
        for _ in 0..MAX_CONSTANT_RETRIES {
            let Some(candidate) = sample_constant(cfg, sign, rng) else {
                break;
            };
            if rule_violation(*role, orig.value, candidate.value).is_none() {
                accepted = Some(candidate);
                break;
            }
        }
        fresh.push(accepted.ok_or(SampleError::ConstantRetriesExhausted {
            slot,
            retries: MAX_CONSTANT_RETRIES,
        })?);
    }
    Ok(skeleton
        .instantiate(&fresh)
        .expect("one constant per slot"))
}
