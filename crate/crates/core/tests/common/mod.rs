//! Independent oracles shared by the integration tests. None of them calls
//! into the code it checks.

#![allow(dead_code)]

use symode::expr::{BinaryOp, Expr};
use symode::sampler::TreeShape;

/// Every valid arity word (pre-order, 0 = leaf, 1 = unary, 2 = binary) with
/// at most `k` internal nodes, found by brute force over all words.
pub fn enumerate_shape_words(k: usize) -> Vec<Vec<u8>> {
    let max_len = 2 * k + 1;
    let mut out = Vec::new();
    for len in 1..=max_len {
        let total = 3usize.pow(len as u32);
        for code in 0..total {
            let mut c = code;
            let word: Vec<u8> = (0..len)
                .map(|_| {
                    let d = (c % 3) as u8;
                    c /= 3;
                    d
                })
                .collect();
            let internal = word.iter().filter(|&&a| a > 0).count();
            if internal <= k && is_tree(&word) {
                out.push(word);
            }
        }
    }
    out
}

fn is_tree(word: &[u8]) -> bool {
    let mut open = 1i64;
    for (i, &a) in word.iter().enumerate() {
        open += a as i64 - 1;
        if open == 0 {
            return i == word.len() - 1;
        }
    }
    false
}

pub fn shape_word(s: &TreeShape) -> Vec<u8> {
    let mut out = Vec::new();
    fn walk(s: &TreeShape, out: &mut Vec<u8>) {
        match s {
            TreeShape::Leaf => out.push(0),
            TreeShape::Unary(a) => {
                out.push(1);
                walk(a, out);
            }
            TreeShape::Binary(a, b) => {
                out.push(2);
                walk(a, out);
                walk(b, out);
            }
        }
    }
    walk(s, &mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    Zero,
    SignFlip,
    PowerBaseOne,
    PowerExponentUnit,
    CoefficientUnit,
    DivisorUnit,
}

/// Checks a resampled instantiation against the original one, locating
/// constants by walking both trees in step. Roles come from the parent:
/// `pow` left = base, `pow` right = exponent, either side of `mul` =
/// coefficient, `div` right = divisor.
pub fn audit_constants(original: &Expr, resampled: &Expr) -> Vec<Violation> {
    let mut out = Vec::new();
    walk_pair(original, resampled, None, &mut out);
    out
}

#[derive(Clone, Copy)]
enum Parent {
    PowLeft,
    PowRight,
    Mul,
    DivRight,
}

fn walk_pair(a: &Expr, b: &Expr, parent: Option<Parent>, out: &mut Vec<Violation>) {
    match (a, b) {
        (Expr::Const(orig), Expr::Const(new)) => {
            let (o, n) = (orig.value, new.value);
            if n == 0.0 {
                out.push(Violation::Zero);
            }
            if (o < 0.0) != (n < 0.0) {
                out.push(Violation::SignFlip);
            }
            let unit = n == 1.0 || n == -1.0;
            match parent {
                Some(Parent::PowLeft) if n == 1.0 => out.push(Violation::PowerBaseOne),
                Some(Parent::PowRight) if unit => out.push(Violation::PowerExponentUnit),
                Some(Parent::Mul) if unit => out.push(Violation::CoefficientUnit),
                Some(Parent::DivRight) if unit => out.push(Violation::DivisorUnit),
                _ => {}
            }
        }
        (Expr::Var, Expr::Var) => {}
        (Expr::Unary(p, x), Expr::Unary(q, y)) => {
            assert_eq!(p, q, "shapes differ");
            walk_pair(x, y, None, out);
        }
        (Expr::Binary(p, x1, x2), Expr::Binary(q, y1, y2)) => {
            assert_eq!(p, q, "shapes differ");
            let (l, r) = match p {
                BinaryOp::Pow => (Some(Parent::PowLeft), Some(Parent::PowRight)),
                BinaryOp::Mul => (Some(Parent::Mul), Some(Parent::Mul)),
                BinaryOp::Div => (None, Some(Parent::DivRight)),
                BinaryOp::Add | BinaryOp::Sub => (None, None),
            };
            walk_pair(x1, y1, l, out);
            walk_pair(x2, y2, r, out);
        }
        _ => panic!("trees differ in structure"),
    }
}

pub fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Exact rational with a positive denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Q(pub i128, pub i128);

impl Q {
    pub fn new(n: i128, d: i128) -> Self {
        assert!(d != 0);
        let g = gcd(n, d).max(1);
        let s = if d < 0 { -1 } else { 1 };
        Q(s * n / g, s * d / g)
    }
    pub fn int(n: i128) -> Self {
        Q(n, 1)
    }
    pub fn add(self, o: Q) -> Q {
        Q::new(self.0 * o.1 + o.0 * self.1, self.1 * o.1)
    }
    pub fn sub(self, o: Q) -> Q {
        self.add(Q(-o.0, o.1))
    }
    pub fn mul(self, o: Q) -> Q {
        Q::new(self.0 * o.0, self.1 * o.1)
    }
    pub fn div(self, o: Q) -> Q {
        Q::new(self.0 * o.1, self.1 * o.0)
    }
    pub fn to_f64(self) -> f64 {
        self.0 as f64 / self.1 as f64
    }
}

/// Fornberg's recursion in exact arithmetic: weights for derivative
/// `order` at 0 from integer `offsets`.
pub fn fornberg_exact(offsets: &[i128], order: usize) -> Vec<Q> {
    let n = offsets.len();
    let x: Vec<Q> = offsets.iter().map(|&o| Q::int(o)).collect();
    let mut c = vec![vec![Q::int(0); order + 1]; n];
    let mut c1 = Q::int(1);
    let mut c4 = x[0];
    c[0][0] = Q::int(1);
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = Q::int(1);
        let c5 = c4;
        c4 = x[i];
        for j in 0..i {
            let c3 = x[i].sub(x[j]);
            c2 = c2.mul(c3);
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    let t = Q::int(k as i128).mul(c[i - 1][k - 1]).sub(c5.mul(c[i - 1][k]));
                    c[i][k] = c1.mul(t).div(c2);
                }
                c[i][0] = Q::int(0).sub(c1.mul(c5).mul(c[i - 1][0])).div(c2);
            }
            for k in (1..=mn).rev() {
                c[j][k] = c4.mul(c[j][k]).sub(Q::int(k as i128).mul(c[j][k - 1])).div(c3);
            }
            c[j][0] = c4.mul(c[j][0]).div(c3);
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}
