//! Canonical printer. Emits a fully parenthesized form that reparses to a
//! structurally identical tree (for parser-shaped trees: nonnegative
//! literals, explicit unary minus). Used verbatim in JSON reports.

use super::{BinaryOp, Expr, NaryOp, UnaryOp};
use std::fmt;

pub(super) fn write_expr(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        Expr::Const(c) => write_const(*c, f),
        Expr::Var(name) => f.write_str(name),
        Expr::Unary(UnaryOp::Neg, inner) => {
            f.write_str("(-")?;
            write_expr(inner, f)?;
            f.write_str(")")
        }
        Expr::Unary(op, inner) => {
            f.write_str(op.name())?;
            f.write_str("(")?;
            write_expr(inner, f)?;
            f.write_str(")")
        }
        Expr::Binary(op, a, b) => {
            let sym = match op {
                BinaryOp::Add => "+",
                BinaryOp::Sub => "-",
                BinaryOp::Mul => "*",
                BinaryOp::Div => "/",
                BinaryOp::Pow => "^",
            };
            f.write_str("(")?;
            write_expr(a, f)?;
            write!(f, " {sym} ")?;
            if matches!(op, BinaryOp::Pow) {
                // exponent slot accepts a signed literal directly
                match b.as_ref() {
                    Expr::Const(c) => write_signed_const(*c, f)?,
                    other => write_expr(other, f)?,
                }
            } else {
                write_expr(b, f)?;
            }
            f.write_str(")")
        }
        Expr::Nary(op, args) => {
            let name = match op {
                NaryOp::Min => "min",
                NaryOp::Max => "max",
            };
            f.write_str(name)?;
            f.write_str("(")?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write_expr(a, f)?;
            }
            f.write_str(")")
        }
        Expr::Norm(vars) => {
            f.write_str("norm(")?;
            for (i, v) in vars.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                f.write_str(v)?;
            }
            f.write_str(")")
        }
    }
}

fn write_const(c: f64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    debug_assert!(c.is_finite(), "non-finite constant in expression");
    if c < 0.0 {
        // reparses as neg(|c|); folded trees may carry negative literals
        write!(f, "(-{:?})", -c)
    } else {
        write!(f, "{:?}", c)
    }
}

fn write_signed_const(c: f64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    debug_assert!(c.is_finite(), "non-finite exponent in expression");
    write!(f, "{:?}", c)
}
