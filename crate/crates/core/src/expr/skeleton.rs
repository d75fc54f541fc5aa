use std::fmt;

use super::{BinaryOp, Constant, Expr, UnaryOp};

/// Placeholder spelling used in skeleton keys.
pub const SLOT_TOKEN: &str = "<c>";

/// Expression structure with every constant replaced by a slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SkeletonNode {
    Var,
    Slot,
    Unary(UnaryOp, Box<SkeletonNode>),
    Binary(BinaryOp, Box<SkeletonNode>, Box<SkeletonNode>),
}

/// Syntactic role of a constant slot, derived from its parent node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotRole {
    PowerBase,
    PowerExponent,
    Coefficient,
    Divisor,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Skeleton {
    root: SkeletonNode,
    key: String,
    slots: usize,
}

impl Skeleton {
    pub fn root(&self) -> &SkeletonNode {
        &self.root
    }

    /// Space-separated prefix word with slots spelled `<c>`; equal for
    /// structurally equal skeletons.
    pub fn key(&self) -> &str {
        &self.key
    }

    pub fn slot_count(&self) -> usize {
        self.slots
    }

    /// Roles of the slots in pre-order.
    pub fn slot_roles(&self) -> Vec<SlotRole> {
        fn walk(node: &SkeletonNode, role: SlotRole, out: &mut Vec<SlotRole>) {
            match node {
                SkeletonNode::Var => {}
                SkeletonNode::Slot => out.push(role),
                SkeletonNode::Unary(_, a) => walk(a, SlotRole::Other, out),
                SkeletonNode::Binary(op, a, b) => {
                    let (left, right) = match op {
                        BinaryOp::Pow => (SlotRole::PowerBase, SlotRole::PowerExponent),
                        BinaryOp::Mul => (SlotRole::Coefficient, SlotRole::Coefficient),
                        BinaryOp::Div => (SlotRole::Other, SlotRole::Divisor),
                        BinaryOp::Add | BinaryOp::Sub => (SlotRole::Other, SlotRole::Other),
                    };
                    walk(a, left, out);
                    walk(b, right, out);
                }
            }
        }
        let mut out = Vec::with_capacity(self.slots);
        walk(&self.root, SlotRole::Other, &mut out);
        out
    }

    pub fn contains_var(&self) -> bool {
        fn walk(node: &SkeletonNode) -> bool {
            match node {
                SkeletonNode::Var => true,
                SkeletonNode::Slot => false,
                SkeletonNode::Unary(_, a) => walk(a),
                SkeletonNode::Binary(_, a, b) => walk(a) || walk(b),
            }
        }
        walk(&self.root)
    }

    /// Fills the slots in pre-order. Returns `None` on a length mismatch.
    pub fn instantiate(&self, constants: &[Constant]) -> Option<Expr> {
        fn walk(node: &SkeletonNode, it: &mut std::slice::Iter<'_, Constant>) -> Option<Expr> {
            Some(match node {
                SkeletonNode::Var => Expr::Var,
                SkeletonNode::Slot => Expr::Const(*it.next()?),
                SkeletonNode::Unary(op, a) => Expr::unary(*op, walk(a, it)?),
                SkeletonNode::Binary(op, a, b) => {
                    let a = walk(a, it)?;
                    let b = walk(b, it)?;
                    Expr::binary(*op, a, b)
                }
            })
        }
        if constants.len() != self.slots {
            return None;
        }
        walk(&self.root, &mut constants.iter())
    }
}

impl fmt::Display for Skeleton {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key)
    }
}

/// Splits an expression into its skeleton and its constants in pre-order.
pub fn skeletonize(e: &Expr) -> (Skeleton, Vec<Constant>) {
    fn walk(e: &Expr, key: &mut Vec<&'static str>, consts: &mut Vec<Constant>) -> SkeletonNode {
        match e {
            Expr::Var => {
                key.push("y");
                SkeletonNode::Var
            }
            Expr::Const(c) => {
                key.push(SLOT_TOKEN);
                consts.push(*c);
                SkeletonNode::Slot
            }
            Expr::Unary(op, a) => {
                key.push(op.name());
                SkeletonNode::Unary(*op, Box::new(walk(a, key, consts)))
            }
            Expr::Binary(op, a, b) => {
                key.push(op.name());
                let a = walk(a, key, consts);
                let b = walk(b, key, consts);
                SkeletonNode::Binary(*op, Box::new(a), Box::new(b))
            }
        }
    }
    let mut key = Vec::new();
    let mut consts = Vec::new();
    let root = walk(e, &mut key, &mut consts);
    let skeleton = Skeleton {
        root,
        key: key.join(" "),
        slots: consts.len(),
    };
    (skeleton, consts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_infix;

    #[test]
    fn riccati_constants_in_preorder() {
        let e = parse_infix("0.6*y**2 + 2*y + 0.1").unwrap();
        let (skeleton, consts) = skeletonize(&e);
        let values: Vec<f64> = consts.iter().map(|c| c.value).collect();
        assert_eq!(values, vec![0.6, 2.0, 2.0, 0.1]);
        assert_eq!(skeleton.key(), "add add mul <c> pow y <c> mul <c> y <c>");
        // the exponent 2 is a constant too
        assert_eq!(skeleton.slot_count(), 4);
        assert_eq!(skeleton.instantiate(&consts).unwrap(), e);
    }

    #[test]
    fn trivial_cases() {
        let (s, c) = skeletonize(&Expr::Var);
        assert_eq!(s.key(), "y");
        assert!(c.is_empty());
        let (s, c) = skeletonize(&parse_infix("sin(3.2)").unwrap());
        assert_eq!(s.key(), "sin <c>");
        assert_eq!(c, vec![Constant::real(3.2)]);
        assert!(!s.contains_var());
    }

    #[test]
    fn roles() {
        let e = parse_infix("2**y + y**3 + 4*y + y/5 + 6/y + 7").unwrap();
        let (s, _) = skeletonize(&e);
        use SlotRole::*;
        assert_eq!(
            s.slot_roles(),
            vec![PowerBase, PowerExponent, Coefficient, Divisor, Other, Other]
        );
    }

    #[test]
    fn instantiate_rejects_wrong_length() {
        let (s, _) = skeletonize(&parse_infix("2*y").unwrap());
        assert!(s.instantiate(&[]).is_none());
    }
}
