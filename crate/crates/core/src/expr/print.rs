use super::{BinaryOp, Constant, Expr, UnaryOp};

// Binding strength, loosest first. Negative literals bind like unary minus.
const SUM: u8 = 1;
const PRODUCT: u8 = 2;
const UNARY: u8 = 3;
const POWER: u8 = 4;
const ATOM: u8 = 5;

/// Integers print without a decimal point; reals use the shortest
/// representation that parses back to the same bits.
pub fn format_constant(c: Constant) -> String {
    if c.integer && c.value.fract() == 0.0 {
        format!("{:.0}", c.value)
    } else {
        let s = format!("{:?}", c.value);
        if s.contains(['.', 'e', 'E']) || s.contains("inf") || s.contains("NaN") {
            s
        } else {
            format!("{s}.0")
        }
    }
}

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Var => ATOM,
        Expr::Const(c) => {
            if c.value.is_sign_negative() {
                UNARY
            } else {
                ATOM
            }
        }
        Expr::Unary(UnaryOp::Neg, _) => UNARY,
        Expr::Unary(_, _) => ATOM,
        Expr::Binary(op, _, _) => match op {
            BinaryOp::Add | BinaryOp::Sub => SUM,
            BinaryOp::Mul | BinaryOp::Div => PRODUCT,
            BinaryOp::Pow => POWER,
        },
    }
}

pub(crate) fn to_infix(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(e, &mut out);
    out
}

fn write_child(e: &Expr, min_prec: u8, out: &mut String) {
    if precedence(e) < min_prec {
        out.push('(');
        write_expr(e, out);
        out.push(')');
    } else {
        write_expr(e, out);
    }
}

fn write_expr(e: &Expr, out: &mut String) {
    match e {
        Expr::Var => out.push('y'),
        Expr::Const(c) => out.push_str(&format_constant(*c)),
        Expr::Unary(UnaryOp::Neg, a) => {
            out.push('-');
            // `-2` would read back as a negative literal, `--y` is ambiguous to the eye.
            let needs_parens = match a.as_ref() {
                Expr::Const(_) => true,
                other => precedence(other) < POWER,
            };
            if needs_parens {
                out.push('(');
                write_expr(a, out);
                out.push(')');
            } else {
                write_expr(a, out);
            }
        }
        Expr::Unary(op, a) => {
            out.push_str(op.name());
            out.push('(');
            write_expr(a, out);
            out.push(')');
        }
        Expr::Binary(op, a, b) => {
            let (symbol, left, right) = match op {
                BinaryOp::Add => (" + ", SUM, PRODUCT),
                BinaryOp::Sub => (" - ", SUM, PRODUCT),
                BinaryOp::Mul => ("*", PRODUCT, UNARY),
                BinaryOp::Div => ("/", PRODUCT, UNARY),
                // right-associative; the exponent may carry a unary minus
                BinaryOp::Pow => ("**", ATOM, UNARY),
            };
            write_child(a, left, out);
            out.push_str(symbol);
            write_child(b, right, out);
        }
    }
}
