//! The tree-walking interpreter.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use super::builtins::{BuiltinKind, Num0, Special};
use super::kernels::{self, truth};
use super::Workbook;
use crate::formula::{BinaryOp, CellAddr, CellPos, Expr, UnaryOp};
use crate::sdf::SdfInfo;
use crate::values::{Array, ErrorValue, Value};

/// Where cell references are resolved.
pub(crate) enum Scope<'a> {
    /// No cells are visible; references are `#REF!`.
    Empty,
    Sheet(usize),
    Frame(&'a Frame<'a>),
}

enum Memo {
    InProgress,
    Done(Value),
}

/// An interpreted call of a sheet-defined function.
pub(crate) struct Frame<'a> {
    info: &'a Arc<SdfInfo>,
    args: &'a [Value],
    memo: RefCell<HashMap<CellPos, Memo>>,
}

impl<'a> Frame<'a> {
    pub(crate) fn new(info: &'a Arc<SdfInfo>, args: &'a [Value]) -> Frame<'a> {
        Frame {
            info,
            args,
            memo: RefCell::new(HashMap::new()),
        }
    }

    pub(crate) fn cell(&self, wb: &Workbook, scope: &Scope, pos: CellPos) -> Value {
        if let Some(i) = self.info.inputs.iter().position(|&p| p == pos) {
            return self.args[i].clone();
        }
        match self.memo.borrow().get(&pos) {
            Some(Memo::Done(v)) => return v.clone(),
            Some(Memo::InProgress) => return Value::Error(ErrorValue::CYCLE),
            None => {}
        }
        let Some(expr) = self.info.source.cells.get(&pos) else {
            return Value::ZERO;
        };
        self.memo.borrow_mut().insert(pos, Memo::InProgress);
        let v = wb.eval(expr, scope);
        self.memo.borrow_mut().insert(pos, Memo::Done(v.clone()));
        v
    }
}

impl Workbook {
    fn is_oracle(scope: &Scope) -> bool {
        matches!(scope, Scope::Frame(_))
    }

    pub(crate) fn eval(&self, e: &Expr, scope: &Scope) -> Value {
        match e {
            Expr::Number(d) => Value::from_double_or_nan(*d),
            Expr::Text(s) => Value::Text(s.clone()),
            Expr::Error(err) => Value::Error(*err),
            Expr::Const(v) => v.clone(),
            Expr::CellRef(a) => match scope {
                Scope::Empty => Value::Error(ErrorValue::REF),
                Scope::Sheet(s) => match &a.sheet {
                    None => self.cell_value(*s, a.pos),
                    Some(_) => self.read_cell(a, Some(*s)),
                },
                Scope::Frame(f) => f.cell(self, scope, a.pos),
            },
            Expr::NormalCellRef(a) => {
                let current = match scope {
                    Scope::Sheet(s) => Some(*s),
                    _ => None,
                };
                self.read_cell(a, current)
            }
            Expr::NormalCellArea(a, b) => {
                let current = match scope {
                    Scope::Sheet(s) => Some(*s),
                    _ => None,
                };
                self.read_area(a, b, current)
            }
            Expr::Unary(op, inner) => {
                let d = self.eval(inner, scope).to_double_or_nan();
                Value::from_double_or_nan(match op {
                    UnaryOp::Neg => -d,
                    UnaryOp::Not => kernels::not(d),
                })
            }
            Expr::Binary(op, a, b) => {
                let x = self.eval(a, scope);
                let y = self.eval(b, scope);
                kernels::binary_values(*op, &x, &y)
            }
            Expr::Compare(op, a, b) => {
                let x = self.eval(a, scope);
                if let Value::Error(err) = x {
                    return Value::Error(err);
                }
                let y = self.eval(b, scope);
                kernels::compare_values(*op, &x, &y)
            }
            Expr::Call(name, args) => self.eval_call(name, args, scope),
            Expr::SdfCall(r, args) => {
                let vals = self.eval_all(args, scope);
                self.call_sdf(r.id, &vals, Self::is_oracle(scope))
            }
            Expr::MakeClosure(args) => {
                let vals = self.eval_all(args, scope);
                crate::sdf::make_closure(self, &vals[0], &vals[1..])
            }
            Expr::Apply(f, args) => {
                let fv = self.eval(f, scope);
                let vals = self.eval_all(args, scope);
                self.apply_value(&fv, &vals, Self::is_oracle(scope))
            }
            Expr::If(c, a, b) => match truth(&self.eval(c, scope)) {
                Ok(true) => self.eval(a, scope),
                Ok(false) => self.eval(b, scope),
                Err(err) => Value::Error(err),
            },
            Expr::Choose(s, args) => match self.eval(s, scope) {
                Value::Number(d) => match kernels::choose_index(d, args.len()) {
                    Some(i) => self.eval(&args[i], scope),
                    None => Value::Error(ErrorValue::VALUE),
                },
                Value::Error(err) => Value::Error(err),
                _ => Value::Error(ErrorValue::VALUE),
            },
            Expr::And(args) => {
                for a in args {
                    match truth(&self.eval(a, scope)) {
                        Ok(true) => {}
                        Ok(false) => return Value::bool(false),
                        Err(err) => return Value::Error(err),
                    }
                }
                Value::bool(true)
            }
            Expr::Or(args) => {
                for a in args {
                    match truth(&self.eval(a, scope)) {
                        Ok(true) => return Value::bool(true),
                        Ok(false) => {}
                        Err(err) => return Value::Error(err),
                    }
                }
                Value::bool(false)
            }
            Expr::Cached(c) => self.eval(&c.expr, scope),
        }
    }

    fn eval_all(&self, args: &[Expr], scope: &Scope) -> Vec<Value> {
        args.iter().map(|a| self.eval(a, scope)).collect()
    }

    fn eval_call(&self, name: &str, args: &[Expr], scope: &Scope) -> Value {
        let Some(b) = self.builtins().get(name).cloned() else {
            return match self.function_id(name) {
                Some(id) => {
                    let vals = self.eval_all(args, scope);
                    self.call_sdf(id, &vals, Self::is_oracle(scope))
                }
                None => Value::Error(ErrorValue::NAME),
            };
        };
        if !b.accepts(args.len()) {
            return Value::Error(ErrorValue::VALUE);
        }
        match &b.kind {
            BuiltinKind::Num0(f) => self.num0(*f),
            BuiltinKind::Num1(_) | BuiltinKind::Num2(_) | BuiltinKind::Generic { .. } => {
                let vals = self.eval_all(args, scope);
                b.apply_generic(&vals)
            }
            BuiltinKind::Special(s) => match s {
                Special::Define => match scope {
                    Scope::Sheet(sheet) => self.define_cell_value(*sheet, args),
                    _ => Value::Error(ErrorValue::VALUE),
                },
                Special::Specialize => {
                    let v = self.eval(&args[0], scope);
                    crate::peval::specialize_value(self, &v)
                }
                Special::Benchmark => {
                    let f = self.eval(&args[0], scope);
                    let n = self.eval(&args[1], scope);
                    crate::bench::benchmark_value(self, &f, &n)
                }
                // The parser gives these their own node kinds.
                Special::If
                | Special::Choose
                | Special::And
                | Special::Or
                | Special::Not
                | Special::Closure
                | Special::Apply => Value::Error(ErrorValue::VALUE),
            },
        }
    }

    pub(crate) fn num0(&self, f: Num0) -> Value {
        match f {
            Num0::Rand => Value::Number(self.random()),
            Num0::Now => Value::Number(now_serial()),
            Num0::True => Value::bool(true),
            Num0::False => Value::bool(false),
            Num0::Na => Value::Error(ErrorValue::NA),
        }
    }

    /// Reads an ordinary cell through a sheet-qualified address.
    pub(crate) fn read_cell(&self, a: &CellAddr, current: Option<usize>) -> Value {
        let sheet = match &a.sheet {
            Some(name) => self.sheet_index(name),
            None => current,
        };
        match sheet {
            Some(s) => self.cell_value(s, a.pos),
            None => Value::Error(ErrorValue::REF),
        }
    }

    pub(crate) fn read_area(&self, a: &CellAddr, b: &CellAddr, current: Option<usize>) -> Value {
        let sheet = match &a.sheet {
            Some(name) => self.sheet_index(name),
            None => current,
        };
        let Some(s) = sheet else {
            return Value::Error(ErrorValue::REF);
        };
        let (r0, r1) = (a.row().min(b.row()), a.row().max(b.row()));
        let (c0, c1) = (a.col().min(b.col()), a.col().max(b.col()));
        let rows = (r1 - r0 + 1) as usize;
        let cols = (c1 - c0 + 1) as usize;
        if rows.saturating_mul(cols) > 1 << 22 {
            return Value::Error(ErrorValue::REF);
        }
        let mut cells = Vec::with_capacity(rows * cols);
        for r in r0..=r1 {
            for c in c0..=c1 {
                cells.push(self.cell_value(s, CellPos { row: r, col: c }));
            }
        }
        Value::Array(Arc::new(Array::new(rows, cols, cells).unwrap()))
    }

    // A DEFINE cell shows the function name, or the error recorded when
    // the definition failed.
    fn define_cell_value(&self, sheet: usize, args: &[Expr]) -> Value {
        let pos = self.eval_stack_top();
        if let Some(pos) = pos {
            if let Some((err, _)) = self.define_errors.borrow().get(&(sheet, pos)) {
                return Value::Error(*err);
            }
        }
        match args.first() {
            Some(Expr::Text(name)) => Value::Text(name.clone()),
            _ => Value::Error(ErrorValue::VALUE),
        }
    }
}

impl BinaryOp {
    pub(crate) fn is_arith(self) -> bool {
        self != BinaryOp::Concat
    }
}

// Days since 1899-12-30, the usual spreadsheet date origin.
fn now_serial() -> f64 {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    secs / 86400.0 + 25569.0
}
