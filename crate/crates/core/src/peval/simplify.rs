//! Algebraic simplification of residual arithmetic.

use crate::formula::{BinaryOp, Expr, UnaryOp};
use crate::values::Value;

fn num(e: &Expr) -> Option<f64> {
    match e.as_const() {
        Some(Value::Number(d)) => Some(d),
        _ => None,
    }
}

/// True if `e` evaluates to a number or an error whatever its cell
/// references hold.
fn numeric(e: &Expr) -> bool {
    match e {
        Expr::Number(_) | Expr::Error(_) => true,
        Expr::Unary(..) | Expr::Compare(..) | Expr::And(_) | Expr::Or(_) => true,
        Expr::Binary(op, ..) => *op != BinaryOp::Concat,
        Expr::If(_, a, b) => numeric(a) && numeric(b),
        Expr::Choose(_, args) => args.iter().all(numeric),
        _ => false,
    }
}

/// True if dropping `e` cannot change what else happens: no calls, no
/// volatile or special builtins.
fn droppable(e: &Expr) -> bool {
    let here = match e {
        Expr::SdfCall(..) | Expr::Apply(..) | Expr::MakeClosure(_) => false,
        // Builtin calls that survived folding are volatile or special, or
        // calls by name.
        Expr::Call(..) => false,
        _ => true,
    };
    let mut ok = here;
    if ok {
        e.for_each_child(|c| ok = ok && droppable(c));
    }
    ok
}

/// Simplifies `a op b` when one operand is a number constant.
///
/// By default every identity in the table is applied: `0+e`, `e+0`, `e-0`,
/// `e*1`, `1*e`, `e/1` and `e^1` become `e`; `0-e` becomes `-e`; `e*0` and
/// `0*e` become 0; `e^0` and `1^e` become 1. Some of these change the
/// result when `e` is an error or text.
///
/// With `strict` set, only rewrites that give the same result bit for bit
/// are used: `e-0`, `e*1`, `1*e`, `e/1` and `e^1` for numeric `e`, and
/// `e^0`, `1^e` for any `e` that can be dropped without losing effects.
pub fn simplify_arith(op: BinaryOp, a: Expr, b: Expr, strict: bool) -> Expr {
    let (x, y) = (num(&a), num(&b));
    let is = |v: Option<f64>, k: f64| v == Some(k);
    let keep = |a: Expr, b: Expr| Expr::Binary(op, Box::new(a), Box::new(b));
    if strict {
        return match op {
            BinaryOp::Sub if is(y, 0.0) && numeric(&a) => a,
            BinaryOp::Mul if is(y, 1.0) && numeric(&a) => a,
            BinaryOp::Mul if is(x, 1.0) && numeric(&b) => b,
            BinaryOp::Div if is(y, 1.0) && numeric(&a) => a,
            BinaryOp::Pow if is(y, 1.0) && numeric(&a) => a,
            BinaryOp::Pow if is(y, 0.0) && droppable(&a) => Expr::Number(1.0),
            BinaryOp::Pow if is(x, 1.0) && droppable(&b) => Expr::Number(1.0),
            _ => keep(a, b),
        };
    }
    match op {
        BinaryOp::Add if is(x, 0.0) => b,
        BinaryOp::Add if is(y, 0.0) => a,
        BinaryOp::Sub if is(y, 0.0) => a,
        BinaryOp::Sub if is(x, 0.0) => Expr::Unary(UnaryOp::Neg, Box::new(b)),
        BinaryOp::Mul if is(x, 0.0) || is(y, 0.0) => Expr::Number(0.0),
        BinaryOp::Mul if is(x, 1.0) => b,
        BinaryOp::Mul if is(y, 1.0) => a,
        BinaryOp::Div if is(y, 1.0) => a,
        BinaryOp::Pow if is(y, 1.0) => a,
        BinaryOp::Pow if is(y, 0.0) || is(x, 1.0) => Expr::Number(1.0),
        _ => keep(a, b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{CellPos, CmpOp};

    fn x() -> Expr {
        Expr::local_ref(CellPos::new(1, 1))
    }

    fn n(d: f64) -> Expr {
        Expr::Number(d)
    }

    fn s(op: BinaryOp, a: Expr, b: Expr) -> String {
        simplify_arith(op, a, b, false).to_string()
    }

    #[test]
    fn table() {
        use BinaryOp::*;
        assert_eq!(s(Add, n(0.0), x()), "A1");
        assert_eq!(s(Add, x(), n(0.0)), "A1");
        assert_eq!(s(Sub, x(), n(0.0)), "A1");
        assert_eq!(s(Sub, n(0.0), x()), "-A1");
        assert_eq!(s(Mul, x(), n(0.0)), "0");
        assert_eq!(s(Mul, n(0.0), x()), "0");
        assert_eq!(s(Mul, n(1.0), x()), "A1");
        assert_eq!(s(Mul, x(), n(1.0)), "A1");
        assert_eq!(s(Div, x(), n(1.0)), "A1");
        assert_eq!(s(Pow, x(), n(1.0)), "A1");
        assert_eq!(s(Pow, x(), n(0.0)), "1");
        assert_eq!(s(Pow, n(1.0), x()), "1");
    }

    #[test]
    fn no_other_identities() {
        use BinaryOp::*;
        assert_eq!(s(Sub, x(), n(1.0)), "A1-1");
        assert_eq!(s(Div, n(0.0), x()), "0/A1");
        assert_eq!(s(Div, n(1.0), x()), "1/A1");
        assert_eq!(s(Pow, n(0.0), x()), "0^A1");
        assert_eq!(s(Add, x(), n(1.0)), "A1+1");
    }

    #[test]
    fn strict_mode_keeps_error_semantics() {
        use BinaryOp::*;
        let st = |op, a, b| simplify_arith(op, a, b, true).to_string();
        // A bare reference may hold text.
        assert_eq!(st(Add, x(), n(0.0)), "A1+0");
        assert_eq!(st(Mul, x(), n(0.0)), "A1*0");
        assert_eq!(st(Mul, x(), n(1.0)), "A1*1");
        let numeric_e = Expr::compare(CmpOp::Gt, x(), n(0.0));
        assert_eq!(st(Mul, numeric_e.clone(), n(1.0)), "A1>0");
        // x+0 maps -0 to +0.
        assert_eq!(st(Add, numeric_e.clone(), n(0.0)), "(A1>0)+0");
        assert_eq!(st(Pow, x(), n(0.0)), "1");
        let call = Expr::Call("RAND".into(), vec![]);
        assert_eq!(st(Pow, call, n(0.0)), "RAND()^0");
    }
}
