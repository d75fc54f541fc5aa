//! Expression trees for right-hand sides `f` of autonomous scalar ODEs `y' = f(y)`.
//!
//! An [`Expr`] is an immutable unary-binary tree over the operators
//! `add sub mul div pow` and `neg sin cos exp sqrt log`, the single variable
//! `y` and numeric constants. Trees are converted to and from prefix token
//! words (the model's target language) and a Python-like infix syntax.

mod parse;
mod print;
mod skeleton;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use parse::{parse_infix, parse_prefix, ParseError};
pub use print::format_constant;
pub use skeleton::{skeletonize, Skeleton, SkeletonNode, SlotRole, SLOT_TOKEN};

/// Binary operators, in canonical rank order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Unary operators, in canonical rank order. `Neg` is unary minus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Sqrt,
    Log,
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 5] = [Self::Add, Self::Sub, Self::Mul, Self::Div, Self::Pow];

    pub fn name(self) -> &'static str {
        match self {
            Self::Add => "add",
            Self::Sub => "sub",
            Self::Mul => "mul",
            Self::Div => "div",
            Self::Pow => "pow",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.name() == name)
    }

    pub fn apply(self, a: f64, b: f64) -> f64 {
        let v = match self {
            Self::Add => a + b,
            Self::Sub => a - b,
            Self::Mul => a * b,
            Self::Div => {
                if b == 0.0 {
                    return f64::NAN;
                }
                a / b
            }
            Self::Pow => return pow_total(a, b),
        };
        finite_or_nan(v)
    }
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 6] = [
        Self::Neg,
        Self::Sin,
        Self::Cos,
        Self::Exp,
        Self::Sqrt,
        Self::Log,
    ];

    /// The five sampled unary operators (unary minus is never sampled).
    pub const SAMPLED: [UnaryOp; 5] = [Self::Sin, Self::Cos, Self::Exp, Self::Sqrt, Self::Log];

    pub fn name(self) -> &'static str {
        match self {
            Self::Neg => "neg",
            Self::Sin => "sin",
            Self::Cos => "cos",
            Self::Exp => "exp",
            Self::Sqrt => "sqrt",
            Self::Log => "log",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.name() == name)
    }

    pub fn apply(self, a: f64) -> f64 {
        let v = match self {
            Self::Neg => -a,
            Self::Sin => a.sin(),
            Self::Cos => a.cos(),
            Self::Exp => a.exp(),
            Self::Sqrt => {
                if a < 0.0 {
                    return f64::NAN;
                }
                a.sqrt()
            }
            Self::Log => {
                if a <= 0.0 {
                    return f64::NAN;
                }
                a.ln()
            }
        };
        finite_or_nan(v)
    }
}

fn finite_or_nan(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::NAN
    }
}

/// Distance below which an exponent counts as an integer for negative bases.
pub const INTEGER_EXPONENT_TOL: f64 = 1e-9;

/// `base ** exponent` with total semantics.
///
/// Negative bases only accept (near-)integer exponents, which are rounded;
/// `0 ** 0 = 1` and `0 ** negative` is NaN.
pub fn pow_total(base: f64, exponent: f64) -> f64 {
    if base.is_nan() || exponent.is_nan() {
        return f64::NAN;
    }
    if base == 0.0 {
        return if exponent == 0.0 {
            1.0
        } else if exponent < 0.0 {
            f64::NAN
        } else {
            0.0
        };
    }
    if base < 0.0 {
        let rounded = exponent.round();
        if (exponent - rounded).abs() > INTEGER_EXPONENT_TOL {
            return f64::NAN;
        }
        // libm pow is exact in sign for integral exponents
        return finite_or_nan(base.powf(rounded));
    }
    finite_or_nan(base.powf(exponent))
}

/// A numeric leaf. `integer` records whether the literal was written (or
/// sampled) as an integer, which only affects printing.
#[derive(Debug, Clone, Copy)]
pub struct Constant {
    pub value: f64,
    pub integer: bool,
}

impl Constant {
    pub fn real(value: f64) -> Self {
        Self {
            value,
            integer: false,
        }
    }

    pub fn int(value: i64) -> Self {
        Self {
            value: value as f64,
            integer: true,
        }
    }
}

impl PartialEq for Constant {
    fn eq(&self, other: &Self) -> bool {
        self.value.to_bits() == other.value.to_bits()
    }
}

impl Eq for Constant {}

/// Expression tree. Equality is structural with bit-equal constants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Var,
    Const(Constant),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

// constructor names mirror the operator tokens
#[allow(clippy::should_implement_trait)]
impl Expr {
    pub fn var() -> Self {
        Expr::Var
    }

    pub fn constant(value: f64) -> Self {
        Expr::Const(Constant::real(value))
    }

    pub fn int(value: i64) -> Self {
        Expr::Const(Constant::int(value))
    }

    pub fn unary(op: UnaryOp, a: Expr) -> Self {
        Expr::Unary(op, Box::new(a))
    }

    pub fn binary(op: BinaryOp, a: Expr, b: Expr) -> Self {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn add(a: Expr, b: Expr) -> Self {
        Self::binary(BinaryOp::Add, a, b)
    }

    pub fn sub(a: Expr, b: Expr) -> Self {
        Self::binary(BinaryOp::Sub, a, b)
    }

    pub fn mul(a: Expr, b: Expr) -> Self {
        Self::binary(BinaryOp::Mul, a, b)
    }

    pub fn div(a: Expr, b: Expr) -> Self {
        Self::binary(BinaryOp::Div, a, b)
    }

    pub fn pow(a: Expr, b: Expr) -> Self {
        Self::binary(BinaryOp::Pow, a, b)
    }

    pub fn neg(a: Expr) -> Self {
        Self::unary(UnaryOp::Neg, a)
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Var | Expr::Const(_) => vec![],
            Expr::Unary(_, a) => vec![a],
            Expr::Binary(_, a, b) => vec![a, b],
        }
    }

    /// Evaluates `f(y)`. Domain violations and overflow yield NaN, which
    /// propagates to the root.
    pub fn evaluate(&self, y: f64) -> f64 {
        match self {
            Expr::Var => y,
            Expr::Const(c) => c.value,
            Expr::Unary(op, a) => {
                let a = a.evaluate(y);
                if a.is_nan() {
                    return f64::NAN;
                }
                op.apply(a)
            }
            Expr::Binary(op, a, b) => {
                let a = a.evaluate(y);
                if a.is_nan() {
                    return f64::NAN;
                }
                let b = b.evaluate(y);
                if b.is_nan() {
                    return f64::NAN;
                }
                op.apply(a, b)
            }
        }
    }

    /// Total node count: operators, variable leaves and constant leaves.
    pub fn complexity(&self) -> usize {
        1 + self.children().iter().map(|c| c.complexity()).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self
            .children()
            .iter()
            .map(|c| c.depth())
            .max()
            .unwrap_or(0)
    }

    pub fn contains_var(&self) -> bool {
        match self {
            Expr::Var => true,
            Expr::Const(_) => false,
            Expr::Unary(_, a) => a.contains_var(),
            Expr::Binary(_, a, b) => a.contains_var() || b.contains_var(),
        }
    }

    /// Constants in pre-order.
    pub fn constants(&self) -> Vec<Constant> {
        let mut out = Vec::new();
        self.visit_preorder(&mut |e| {
            if let Expr::Const(c) = e {
                out.push(*c);
            }
        });
        out
    }

    pub fn visit_preorder<F: FnMut(&Expr)>(&self, f: &mut F) {
        f(self);
        match self {
            Expr::Var | Expr::Const(_) => {}
            Expr::Unary(_, a) => a.visit_preorder(f),
            Expr::Binary(_, a, b) => {
                a.visit_preorder(f);
                b.visit_preorder(f);
            }
        }
    }

    /// Counts operator occurrences by vocabulary name; leaves are excluded.
    pub fn operator_histogram(&self) -> BTreeMap<String, usize> {
        let mut hist = BTreeMap::new();
        self.visit_preorder(&mut |e| {
            let name = match e {
                Expr::Unary(op, _) => op.name(),
                Expr::Binary(op, _, _) => op.name(),
                _ => return,
            };
            *hist.entry(name.to_string()).or_insert(0) += 1;
        });
        hist
    }

    /// Pre-order token word, e.g. `["mul", "0.1", "y"]`.
    pub fn to_prefix(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit_preorder(&mut |e| {
            out.push(match e {
                Expr::Var => "y".to_string(),
                Expr::Const(c) => print::format_constant(*c),
                Expr::Unary(op, _) => op.name().to_string(),
                Expr::Binary(op, _, _) => op.name().to_string(),
            })
        });
        out
    }

    /// Precedence-aware infix text, e.g. `y**2 + 1.64*cos(y)`.
    pub fn to_infix(&self) -> String {
        print::to_infix(self)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_infix())
    }
}
