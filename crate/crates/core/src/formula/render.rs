use super::expr::{Expr, UnaryOp};
use crate::values::Value;

/// Renders an expression as formula text, with a leading `=`.
pub fn render_expr(e: &Expr) -> String {
    let mut out = String::from("=");
    write_expr(&mut out, e);
    out
}

/// Renders an expression without the leading `=`.
pub fn render_body(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, e);
    out
}

/// Renders a number so that parsing it back gives the same value.
pub fn render_number(d: f64) -> String {
    if d == f64::INFINITY {
        "1e309".to_string()
    } else if d == f64::NEG_INFINITY {
        "-1e309".to_string()
    } else {
        crate::values::format_number(d)
    }
}

const PREC_CMP: u8 = 1;
const PREC_UNARY: u8 = 6;
const PREC_ATOM: u8 = 7;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Compare(..) => PREC_CMP,
        Expr::Binary(op, ..) => op.precedence(),
        Expr::Unary(UnaryOp::Neg, _) => PREC_UNARY,
        Expr::Number(d) if d.is_sign_negative() => PREC_UNARY,
        Expr::Cached(c) => precedence(&c.expr),
        _ => PREC_ATOM,
    }
}

fn write_child(out: &mut String, e: &Expr, min: u8) {
    if precedence(e) < min {
        out.push('(');
        write_expr(out, e);
        out.push(')');
    } else {
        write_expr(out, e);
    }
}

fn write_list(out: &mut String, name: &str, items: &[&Expr]) {
    out.push_str(name);
    out.push('(');
    for (i, a) in items.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write_expr(out, a);
    }
    out.push(')');
}

fn write_const(out: &mut String, v: &Value) {
    match v {
        Value::Number(d) => out.push_str(&render_number(*d)),
        Value::Error(e) => write_error(out, *e),
        Value::Function(fv) => {
            out.push_str("CLOSURE(");
            out.push_str(&Value::text(&fv.name).literal());
            for arg in &fv.captured {
                out.push(',');
                match arg {
                    Some(v) => write_const(out, v),
                    None => out.push_str("#NA"),
                }
            }
            out.push(')');
        }
        other => out.push_str(&other.literal()),
    }
}

fn write_error(out: &mut String, e: crate::values::ErrorValue) {
    let name = e.name();
    match name.strip_prefix("#ERR:") {
        Some(msg) => {
            out.push_str("ERR(");
            out.push_str(&Value::text(msg).literal());
            out.push(')');
        }
        None => out.push_str(&name),
    }
}

fn write_expr(out: &mut String, e: &Expr) {
    match e {
        Expr::Number(d) => out.push_str(&render_number(*d)),
        Expr::Text(s) => out.push_str(&Value::Text(s.clone()).literal()),
        Expr::Error(err) => write_error(out, *err),
        Expr::Const(v) => write_const(out, v),
        Expr::CellRef(a) | Expr::NormalCellRef(a) => out.push_str(&a.to_string()),
        Expr::NormalCellArea(a, b) => {
            out.push_str(&a.to_string());
            out.push(':');
            out.push_str(&b.pos.to_string());
        }
        Expr::Unary(UnaryOp::Neg, inner) => {
            out.push('-');
            write_child(out, inner, PREC_UNARY);
        }
        Expr::Unary(UnaryOp::Not, inner) => write_list(out, "NOT", &[inner]),
        Expr::Binary(op, a, b) => {
            let p = op.precedence();
            write_child(out, a, p);
            out.push_str(op.symbol());
            // Left associative: an equal-precedence right operand needs parens.
            write_child(out, b, p + 1);
        }
        Expr::Compare(op, a, b) => {
            write_child(out, a, PREC_CMP);
            out.push_str(op.symbol());
            write_child(out, b, PREC_CMP + 1);
        }
        Expr::Call(name, args) => write_list(out, name, &args.iter().collect::<Vec<_>>()),
        Expr::SdfCall(r, args) => write_list(out, &r.name, &args.iter().collect::<Vec<_>>()),
        Expr::MakeClosure(args) => write_list(out, "CLOSURE", &args.iter().collect::<Vec<_>>()),
        Expr::Apply(f, args) => {
            let mut items = vec![&**f];
            items.extend(args.iter());
            write_list(out, "APPLY", &items);
        }
        Expr::If(c, a, b) => write_list(out, "IF", &[c, a, b]),
        Expr::Choose(s, args) => {
            let mut items = vec![&**s];
            items.extend(args.iter());
            write_list(out, "CHOOSE", &items);
        }
        Expr::And(args) => write_list(out, "AND", &args.iter().collect::<Vec<_>>()),
        Expr::Or(args) => write_list(out, "OR", &args.iter().collect::<Vec<_>>()),
        Expr::Cached(c) => write_expr(out, &c.expr),
    }
}

impl std::fmt::Display for Expr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&render_body(self))
    }
}

/// Structural equality ignoring `Cached` wrappers.
pub fn same_modulo_cached(a: &Expr, b: &Expr) -> bool {
    a.strip_cached() == b.strip_cached()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::expr::BinaryOp;
    use crate::formula::parse_formula;
    use crate::formula::expr::CellPos;
    use crate::values::ErrorValue;

    #[test]
    fn simple() {
        let e = Expr::binary(
            BinaryOp::Add,
            Expr::Number(1.0),
            Expr::local_ref(CellPos::new(1, 1)),
        );
        assert_eq!(render_expr(&e), "=1+A1");
        assert_eq!(render_expr(&Expr::Error(ErrorValue::NA)), "=#NA");
    }

    #[test]
    fn minimal_parentheses() {
        for src in [
            "=(A1+B1)*C1",
            "=A1-(B1-C1)",
            "=A1-B1-C1",
            "=2^(3^2)",
            "=-(2^2)",
            "=-2^2",
            "=1=2=3",
            "=1=(2=3)",
            "=\"a\"&1+2&\"b\"",
            "=(\"a\"&1)+2",
            "=\"a\"&\"b\"=\"ab\"",
            "=\"a\"&(\"b\"=\"ab\")",
        ] {
            assert_eq!(render_expr(&parse_formula(src).unwrap()), src);
        }
    }

    #[test]
    fn monthlen_source() {
        let src = "=CHOOSE(B1,31,28+OR(AND(NOT(MOD(A1,4)),MOD(A1,100)),NOT(MOD(A1,400))),\
                   31,30,31,30,31,31,30,31,30,31)";
        let e = parse_formula(src).unwrap();
        assert_eq!(render_expr(&e), src);
    }

    #[test]
    fn user_errors_render_as_err_calls() {
        let e = Expr::Error(ErrorValue::user("P"));
        assert_eq!(render_expr(&e), "=ERR(\"P\")");
    }
}
