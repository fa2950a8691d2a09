//! Translation of compute cells to IR.
//!
//! Expressions compile in one of four ways: to a boxed value (`val`), to a
//! naked double (`num`), as a three-way branch (`cond`) or in tail position
//! (`ret`). The choice is syntax-directed: numeric operators and numeric
//! builtins use doubles, everything else boxed values.

use std::collections::HashMap;
use std::sync::Arc;

use super::{CompiledFunction, Instr, Operand, Pc, Reg};
use crate::engine::{BuiltinKind, Num0, Special, Workbook};
use crate::formula::{BinaryOp, Cached, CellPos, Expr, UnaryOp};
use crate::sdf::{ComputeCell, EvalCond};
use crate::values::{encode_error, ErrorValue, Value};

#[derive(Debug, thiserror::Error)]
pub enum CompileError {
    #[error("reference to cell {0}, which is not part of the body")]
    UnknownCell(CellPos),
    #[error("the body needs too many registers")]
    TooManyRegisters,
}

#[derive(Clone, Copy, Debug)]
enum R {
    V(Reg),
    F(Reg),
}

struct Slot {
    reg: R,
    /// Memo flag and thunk label of a lazily evaluated cell.
    lazy: Option<(Reg, Pc)>,
}

enum Item {
    Op(Instr),
    Label(Pc),
}

struct Compiler<'a> {
    wb: &'a Workbook,
    items: Vec<Item>,
    n_v: usize,
    n_f: usize,
    n_memo: usize,
    n_labels: Pc,
    inputs: HashMap<CellPos, Reg>,
    slots: HashMap<CellPos, Slot>,
    cached: HashMap<u32, (R, Reg)>,
    scratch: Reg,
    error: Option<CompileError>,
}

/// Compiles a scheduled body. The last compute cell is the output.
pub fn compile(
    wb: &Workbook,
    name: &Arc<str>,
    inputs: &[CellPos],
    body: &[ComputeCell],
) -> Result<CompiledFunction, CompileError> {
    let mut c = Compiler {
        wb,
        items: Vec::new(),
        n_v: inputs.len(),
        n_f: 0,
        n_memo: 0,
        n_labels: 0,
        inputs: inputs.iter().enumerate().map(|(i, p)| (*p, i as Reg)).collect(),
        slots: HashMap::new(),
        cached: HashMap::new(),
        scratch: 0,
        error: None,
    };
    c.scratch = c.new_v();

    let Some((out, cells)) = body.split_last() else {
        return Err(CompileError::UnknownCell(CellPos { row: 1, col: 1 }));
    };
    for cc in cells {
        let reg = if c.is_num(&cc.expr) {
            R::F(c.new_f())
        } else {
            R::V(c.new_v())
        };
        let lazy = (cc.cond == EvalCond::OnDemand).then(|| (c.new_memo(), c.new_label()));
        c.slots.insert(cc.cell, Slot { reg, lazy });
    }
    for cc in cells {
        match &cc.cond {
            EvalCond::Always => c.assign(cc),
            EvalCond::When(g) => {
                let (run, skip) = (c.new_label(), c.new_label());
                c.cond(g, run, skip, skip);
                c.place(run);
                c.assign(cc);
                c.place(skip);
            }
            EvalCond::OnDemand => {}
        }
    }
    c.ret(&out.expr);
    for cc in cells {
        if let Some((flag, label)) = c.slots[&cc.cell].lazy {
            c.place(label);
            c.assign(cc);
            c.emit(Instr::MemoSet { flag });
            c.emit(Instr::EndThunk);
        }
    }
    if let Some(e) = c.error.take() {
        return Err(e);
    }
    if c.n_v > Reg::MAX as usize || c.n_f > Reg::MAX as usize || c.n_memo > Reg::MAX as usize {
        return Err(CompileError::TooManyRegisters);
    }
    let (v_regs, f_regs, memos, scratch) = (c.n_v, c.n_f, c.n_memo, c.scratch);
    Ok(CompiledFunction {
        name: name.clone(),
        code: c.finish(),
        arity: inputs.len(),
        v_regs,
        f_regs,
        memos,
        scratch,
    })
}

fn is_named(name: &str, wanted: &str) -> bool {
    name.eq_ignore_ascii_case(wanted)
}

fn concat_parts<'e>(e: &'e Expr, out: &mut Vec<&'e Expr>) {
    match e {
        Expr::Binary(BinaryOp::Concat, a, b) => {
            concat_parts(a, out);
            concat_parts(b, out);
        }
        other => out.push(other),
    }
}

fn const_error(v: &Value) -> Value {
    match v {
        Value::Error(e) => Value::Error(*e),
        _ => Value::Error(ErrorValue::VALUE),
    }
}

impl Compiler<'_> {
    fn new_v(&mut self) -> Reg {
        self.n_v += 1;
        (self.n_v - 1) as Reg
    }

    fn new_f(&mut self) -> Reg {
        self.n_f += 1;
        (self.n_f - 1) as Reg
    }

    fn new_memo(&mut self) -> Reg {
        self.n_memo += 1;
        (self.n_memo - 1) as Reg
    }

    fn new_label(&mut self) -> Pc {
        self.n_labels += 1;
        self.n_labels - 1
    }

    fn emit(&mut self, i: Instr) {
        self.items.push(Item::Op(i));
    }

    fn place(&mut self, l: Pc) {
        self.items.push(Item::Label(l));
    }

    fn fd(&mut self, dst: Option<Reg>) -> Reg {
        dst.unwrap_or_else(|| self.new_f())
    }

    fn vd(&mut self, dst: Option<Reg>) -> Reg {
        dst.unwrap_or_else(|| self.new_v())
    }

    fn fplace(&mut self, r: Reg, dst: Option<Reg>) -> Reg {
        match dst {
            Some(d) if d != r => {
                self.emit(Instr::FMove { dst: d, src: r });
                d
            }
            _ => r,
        }
    }

    fn vplace(&mut self, r: Reg, dst: Option<Reg>) -> Reg {
        match dst {
            Some(d) if d != r => {
                self.emit(Instr::Move { dst: d, src: r });
                d
            }
            _ => r,
        }
    }

    fn assign(&mut self, cc: &ComputeCell) {
        match self.slots[&cc.cell].reg {
            R::F(r) => {
                self.num_to(&cc.expr, Some(r));
            }
            R::V(r) => {
                self.val_to(&cc.expr, Some(r));
            }
        }
    }

    fn reference(&mut self, pos: CellPos) -> R {
        if let Some(&i) = self.inputs.get(&pos) {
            return R::V(i);
        }
        match self.slots.get(&pos) {
            Some(slot) => {
                let reg = slot.reg;
                if let Some((flag, thunk)) = slot.lazy {
                    self.emit(Instr::Force { flag, thunk });
                }
                reg
            }
            None => {
                self.error.get_or_insert(CompileError::UnknownCell(pos));
                R::V(self.scratch)
            }
        }
    }

    /// True if the expression always yields a number or an error.
    fn is_num(&self, e: &Expr) -> bool {
        match e {
            Expr::Number(_) | Expr::Error(_) => true,
            Expr::Const(v) => matches!(v, Value::Number(_) | Value::Error(_)),
            Expr::Text(_) => false,
            Expr::CellRef(a) => {
                !self.inputs.contains_key(&a.pos)
                    && matches!(self.slots.get(&a.pos), Some(Slot { reg: R::F(_), .. }))
            }
            Expr::Unary(..) | Expr::Compare(..) | Expr::And(_) | Expr::Or(_) => true,
            Expr::Binary(op, ..) => op.is_arith(),
            Expr::Call(name, args) => self
                .wb
                .builtins()
                .get(name)
                .is_some_and(|b| !b.accepts(args.len()) || b.is_numeric()),
            Expr::If(_, a, b) => self.is_num(a) && self.is_num(b),
            Expr::Choose(_, args) => args.iter().all(|a| self.is_num(a)),
            Expr::Cached(c) => self.is_num(&c.expr),
            Expr::NormalCellRef(_)
            | Expr::NormalCellArea(..)
            | Expr::SdfCall(..)
            | Expr::MakeClosure(_)
            | Expr::Apply(..) => false,
        }
    }

    /// Comparisons take the numeric path when the left operand is
    /// numeric, or the right one is a number constant. Otherwise a text
    /// left operand would mask an error on the right.
    fn numeric_compare(&self, a: &Expr, b: &Expr) -> bool {
        self.is_num(a) || matches!(b.as_const(), Some(Value::Number(_)))
    }

    /// True if evaluating the expression cannot have effects or fail to
    /// terminate, so it may be evaluated even when its value is not needed.
    fn is_pure(&self, e: &Expr) -> bool {
        let here = match e {
            Expr::SdfCall(..) | Expr::Apply(..) => false,
            Expr::Call(name, _) => match self.wb.builtins().get(name) {
                None => false,
                Some(b) => !b.volatile && !matches!(b.kind, BuiltinKind::Special(_)),
            },
            _ => true,
        };
        let mut pure = here;
        if pure {
            e.for_each_child(|c| pure = pure && self.is_pure(c));
        }
        pure
    }

    fn call_args(&mut self, args: &[Expr]) -> Vec<Reg> {
        args.iter().map(|a| self.val(a)).collect()
    }

    fn num(&mut self, e: &Expr) -> Reg {
        self.num_to(e, None)
    }

    fn val(&mut self, e: &Expr) -> Reg {
        self.val_to(e, None)
    }

    fn const_f(&mut self, value: f64, dst: Option<Reg>) -> Reg {
        let d = self.fd(dst);
        self.emit(Instr::Const { dst: d, value });
        d
    }

    fn const_v(&mut self, value: Value, dst: Option<Reg>) -> Reg {
        let d = self.vd(dst);
        self.emit(Instr::ConstV { dst: d, value });
        d
    }

    fn unwrap_to(&mut self, v: Reg, dst: Option<Reg>) -> Reg {
        let d = self.fd(dst);
        self.emit(Instr::Unwrap { dst: d, src: v });
        d
    }

    fn box_to(&mut self, f: Reg, dst: Option<Reg>) -> Reg {
        let d = self.vd(dst);
        self.emit(Instr::Box { dst: d, src: f });
        d
    }

    fn num_to(&mut self, e: &Expr, dst: Option<Reg>) -> Reg {
        match e {
            Expr::Number(d) => self.const_f(*d, dst),
            Expr::Error(err) => self.const_f(encode_error(*err), dst),
            Expr::Text(_) => self.const_f(encode_error(ErrorValue::VALUE), dst),
            Expr::Const(v) => self.const_f(v.to_double_or_nan(), dst),
            Expr::CellRef(a) => match self.reference(a.pos) {
                R::F(r) => self.fplace(r, dst),
                R::V(r) => self.unwrap_to(r, dst),
            },
            Expr::Unary(op, x) => {
                let src = self.num(x);
                let d = self.fd(dst);
                self.emit(match op {
                    UnaryOp::Neg => Instr::Neg { dst: d, src },
                    UnaryOp::Not => Instr::Not { dst: d, src },
                });
                d
            }
            Expr::Binary(op, a, b) if op.is_arith() => {
                let x = self.num(a);
                let y = self.num(b);
                let d = self.fd(dst);
                self.emit(Instr::Arith {
                    op: *op,
                    dst: d,
                    a: x,
                    b: y,
                });
                d
            }
            Expr::Compare(op, a, b) if self.numeric_compare(a, b) => {
                let x = self.num(a);
                if self.is_pure(b) {
                    let y = self.num(b);
                    let d = self.fd(dst);
                    self.emit(Instr::Cmp {
                        op: *op,
                        dst: d,
                        a: x,
                        b: y,
                    });
                    d
                } else {
                    // The right operand is not evaluated if the left is an error.
                    let d = self.fd(dst);
                    let (bad, end) = (self.new_label(), self.new_label());
                    self.emit(Instr::BrNan { src: x, target: bad });
                    let y = self.num(b);
                    self.emit(Instr::Cmp {
                        op: *op,
                        dst: d,
                        a: x,
                        b: y,
                    });
                    self.emit(Instr::Jump { target: end });
                    self.place(bad);
                    self.emit(Instr::FMove { dst: d, src: x });
                    self.place(end);
                    d
                }
            }
            Expr::Call(name, args) => {
                let Some(b) = self.wb.builtins().get(name).cloned() else {
                    let v = self.val(e);
                    return self.unwrap_to(v, dst);
                };
                if !b.accepts(args.len()) {
                    return self.const_f(encode_error(ErrorValue::VALUE), dst);
                }
                match &b.kind {
                    BuiltinKind::Num0(f) => match f {
                        Num0::True => self.const_f(1.0, dst),
                        Num0::False => self.const_f(0.0, dst),
                        Num0::Na => self.const_f(encode_error(ErrorValue::NA), dst),
                        Num0::Rand => {
                            let d = self.fd(dst);
                            self.emit(Instr::Rand { dst: d });
                            d
                        }
                        Num0::Now => {
                            let d = self.fd(dst);
                            self.emit(Instr::Now { dst: d });
                            d
                        }
                    },
                    BuiltinKind::Num1(f) => {
                        let src = self.num(&args[0]);
                        let d = self.fd(dst);
                        self.emit(Instr::Math1 { f: *f, dst: d, src });
                        d
                    }
                    BuiltinKind::Num2(f) => {
                        let a = self.num(&args[0]);
                        let bb = self.num(&args[1]);
                        let d = self.fd(dst);
                        self.emit(Instr::Math2 {
                            f: *f,
                            dst: d,
                            a,
                            b: bb,
                        });
                        d
                    }
                    _ if is_named(name, "ISTRUE") || is_named(name, "ISFALSE") => self.cond_num(e, dst),
                    _ => {
                        let v = self.val(e);
                        self.unwrap_to(v, dst)
                    }
                }
            }
            Expr::If(c, a, b) if self.is_num(a) && self.is_num(b) => {
                let d = self.fd(dst);
                let (lt, lf, bad, end) = (self.new_label(), self.new_label(), self.new_label(), self.new_label());
                self.cond(c, lt, lf, bad);
                self.place(lt);
                self.num_to(a, Some(d));
                self.emit(Instr::Jump { target: end });
                self.place(lf);
                self.num_to(b, Some(d));
                self.emit(Instr::Jump { target: end });
                self.place(bad);
                self.emit(Instr::Unwrap {
                    dst: d,
                    src: self.scratch,
                });
                self.place(end);
                d
            }
            Expr::Choose(s, args) if args.iter().all(|a| self.is_num(a)) => {
                let sel = self.num(s);
                let d = self.fd(dst);
                let targets: Vec<Pc> = args.iter().map(|_| self.new_label()).collect();
                let (bad, oob, end) = (self.new_label(), self.new_label(), self.new_label());
                self.emit(Instr::Switch {
                    src: sel,
                    targets: targets.clone(),
                    bad,
                    out_of_range: oob,
                });
                for (a, l) in args.iter().zip(targets) {
                    self.place(l);
                    self.num_to(a, Some(d));
                    self.emit(Instr::Jump { target: end });
                }
                self.place(bad);
                self.emit(Instr::Unwrap {
                    dst: d,
                    src: self.scratch,
                });
                self.emit(Instr::Jump { target: end });
                self.place(oob);
                self.const_f(encode_error(ErrorValue::VALUE), Some(d));
                self.place(end);
                d
            }
            Expr::And(_) | Expr::Or(_) => self.cond_num(e, dst),
            Expr::Cached(c) => match self.cached(c) {
                R::F(r) => self.fplace(r, dst),
                R::V(r) => self.unwrap_to(r, dst),
            },
            _ => {
                let v = self.val(e);
                self.unwrap_to(v, dst)
            }
        }
    }

    // A condition materialized as 1, 0 or the error.
    fn cond_num(&mut self, e: &Expr, dst: Option<Reg>) -> Reg {
        let d = self.fd(dst);
        let (lt, lf, bad, end) = (self.new_label(), self.new_label(), self.new_label(), self.new_label());
        self.cond(e, lt, lf, bad);
        self.place(lt);
        self.const_f(1.0, Some(d));
        self.emit(Instr::Jump { target: end });
        self.place(lf);
        self.const_f(0.0, Some(d));
        self.emit(Instr::Jump { target: end });
        self.place(bad);
        self.emit(Instr::Unwrap {
            dst: d,
            src: self.scratch,
        });
        self.place(end);
        d
    }

    fn val_to(&mut self, e: &Expr, dst: Option<Reg>) -> Reg {
        match e {
            Expr::Number(d) => self.const_v(Value::from_double_or_nan(*d), dst),
            Expr::Text(s) => self.const_v(Value::Text(s.clone()), dst),
            Expr::Error(err) => self.const_v(Value::Error(*err), dst),
            Expr::Const(v) => self.const_v(v.clone(), dst),
            Expr::CellRef(a) => match self.reference(a.pos) {
                R::V(r) => self.vplace(r, dst),
                R::F(r) => self.box_to(r, dst),
            },
            Expr::NormalCellRef(a) => {
                let d = self.vd(dst);
                self.emit(Instr::ReadCell {
                    dst: d,
                    addr: a.clone(),
                });
                d
            }
            Expr::NormalCellArea(a, b) => {
                let d = self.vd(dst);
                self.emit(Instr::ReadArea {
                    dst: d,
                    a: a.clone(),
                    b: b.clone(),
                });
                d
            }
            Expr::Binary(BinaryOp::Concat, ..) => {
                let mut parts = Vec::new();
                concat_parts(e, &mut parts);
                let ops: Vec<Operand> = parts
                    .into_iter()
                    .map(|p| {
                        if self.is_num(p) {
                            Operand::F(self.num(p))
                        } else {
                            Operand::V(self.val(p))
                        }
                    })
                    .collect();
                let d = self.vd(dst);
                self.emit(Instr::Concat { dst: d, parts: ops });
                d
            }
            Expr::Compare(op, a, b) if !self.numeric_compare(a, b) => {
                let x = self.val(a);
                let d = self.vd(dst);
                if self.is_pure(b) {
                    let y = self.val(b);
                    self.emit(Instr::CmpV {
                        op: *op,
                        dst: d,
                        a: x,
                        b: y,
                    });
                } else {
                    let (skip, end) = (self.new_label(), self.new_label());
                    self.emit(Instr::BrErr { src: x, target: skip });
                    let y = self.val(b);
                    self.emit(Instr::CmpV {
                        op: *op,
                        dst: d,
                        a: x,
                        b: y,
                    });
                    self.emit(Instr::Jump { target: end });
                    self.place(skip);
                    self.emit(Instr::Move { dst: d, src: x });
                    self.place(end);
                }
                d
            }
            Expr::Call(name, args) => {
                let Some(b) = self.wb.builtins().get(name).cloned() else {
                    let regs = self.call_args(args);
                    let d = self.vd(dst);
                    self.emit(Instr::CallNamed {
                        name: name.clone(),
                        dst: d,
                        args: regs,
                    });
                    return d;
                };
                if !b.accepts(args.len()) {
                    return self.const_v(Value::Error(ErrorValue::VALUE), dst);
                }
                match &b.kind {
                    BuiltinKind::Generic { .. } if !(is_named(name, "ISTRUE") || is_named(name, "ISFALSE")) => {
                        let regs = self.call_args(args);
                        let d = self.vd(dst);
                        self.emit(Instr::Builtin {
                            b: b.clone(),
                            dst: d,
                            args: regs,
                        });
                        d
                    }
                    BuiltinKind::Special(which @ (Special::Specialize | Special::Benchmark)) => {
                        let regs = self.call_args(args);
                        let d = self.vd(dst);
                        self.emit(Instr::Special {
                            which: *which,
                            dst: d,
                            args: regs,
                        });
                        d
                    }
                    BuiltinKind::Special(_) => self.const_v(Value::Error(ErrorValue::VALUE), dst),
                    _ => {
                        let f = self.num(e);
                        self.box_to(f, dst)
                    }
                }
            }
            Expr::SdfCall(r, args) => {
                let regs = self.call_args(args);
                let d = self.vd(dst);
                self.emit(Instr::Call {
                    target: r.id,
                    name: r.name.clone(),
                    dst: d,
                    args: regs,
                });
                d
            }
            Expr::MakeClosure(args) => {
                let regs = self.call_args(args);
                let d = self.vd(dst);
                self.emit(Instr::Closure { dst: d, args: regs });
                d
            }
            Expr::Apply(f, args) => {
                let fr = self.val(f);
                let regs = self.call_args(args);
                let d = self.vd(dst);
                self.emit(Instr::Apply {
                    dst: d,
                    f: fr,
                    args: regs,
                });
                d
            }
            Expr::If(c, a, b) if !self.is_num(e) => {
                let d = self.vd(dst);
                let (lt, lf, bad, end) = (self.new_label(), self.new_label(), self.new_label(), self.new_label());
                self.cond(c, lt, lf, bad);
                self.place(lt);
                self.val_to(a, Some(d));
                self.emit(Instr::Jump { target: end });
                self.place(lf);
                self.val_to(b, Some(d));
                self.emit(Instr::Jump { target: end });
                self.place(bad);
                self.emit(Instr::Move {
                    dst: d,
                    src: self.scratch,
                });
                self.place(end);
                d
            }
            Expr::Choose(s, args) if !self.is_num(e) => {
                let sel = self.num(s);
                let d = self.vd(dst);
                let targets: Vec<Pc> = args.iter().map(|_| self.new_label()).collect();
                let (bad, oob, end) = (self.new_label(), self.new_label(), self.new_label());
                self.emit(Instr::Switch {
                    src: sel,
                    targets: targets.clone(),
                    bad,
                    out_of_range: oob,
                });
                for (a, l) in args.iter().zip(targets) {
                    self.place(l);
                    self.val_to(a, Some(d));
                    self.emit(Instr::Jump { target: end });
                }
                self.place(bad);
                self.emit(Instr::Move {
                    dst: d,
                    src: self.scratch,
                });
                self.emit(Instr::Jump { target: end });
                self.place(oob);
                self.const_v(Value::Error(ErrorValue::VALUE), Some(d));
                self.place(end);
                d
            }
            Expr::Cached(c) => match self.cached(c) {
                R::V(r) => self.vplace(r, dst),
                R::F(r) => self.box_to(r, dst),
            },
            _ => {
                let f = self.num(e);
                self.box_to(f, dst)
            }
        }
    }

    // Computes a shared subexpression once per call.
    fn cached(&mut self, c: &Arc<Cached>) -> R {
        let (reg, flag) = match self.cached.get(&c.id) {
            Some(x) => *x,
            None => {
                let reg = if self.is_num(&c.expr) {
                    R::F(self.new_f())
                } else {
                    R::V(self.new_v())
                };
                let flag = self.new_memo();
                self.cached.insert(c.id, (reg, flag));
                (reg, flag)
            }
        };
        let done = self.new_label();
        self.emit(Instr::Memo { flag, target: done });
        match reg {
            R::F(r) => {
                self.num_to(&c.expr, Some(r));
            }
            R::V(r) => {
                self.val_to(&c.expr, Some(r));
            }
        }
        self.emit(Instr::MemoSet { flag });
        self.place(done);
        reg
    }

    /// Operand of a numeric comparison in condition position. Constant
    /// numbers need no NaN test; constant errors go straight to `bad`.
    fn proper(&mut self, e: &Expr, bad: Pc) -> Option<Reg> {
        match e.as_const() {
            Some(Value::Number(d)) => Some(self.const_f(d, None)),
            Some(other) => {
                self.emit(Instr::Scratch {
                    value: const_error(&other),
                });
                self.emit(Instr::Jump { target: bad });
                None
            }
            None => {
                let r = self.num(e);
                self.emit(Instr::BrNan { src: r, target: bad });
                Some(r)
            }
        }
    }

    fn cond(&mut self, e: &Expr, t: Pc, f: Pc, bad: Pc) {
        if let Some(v) = e.as_const() {
            match v {
                Value::Number(d) => self.emit(Instr::Jump {
                    target: if d != 0.0 { t } else { f },
                }),
                other => {
                    self.emit(Instr::Scratch {
                        value: const_error(&other),
                    });
                    self.emit(Instr::Jump { target: bad });
                }
            }
            return;
        }
        match e {
            Expr::Unary(UnaryOp::Not, x) => self.cond(x, f, t, bad),
            Expr::Compare(op, a, b) if self.numeric_compare(a, b) => {
                let Some(x) = self.proper(a, bad) else {
                    return;
                };
                let Some(y) = self.proper(b, bad) else {
                    return;
                };
                self.emit(Instr::BrCmp {
                    op: *op,
                    a: x,
                    b: y,
                    t,
                    f,
                });
            }
            Expr::Compare(op, a, b) => {
                let x = self.val(a);
                if !a.is_const() {
                    self.emit(Instr::BrErr { src: x, target: bad });
                }
                let y = self.val(b);
                if !b.is_const() {
                    self.emit(Instr::BrErr { src: y, target: bad });
                }
                self.emit(Instr::BrCmpV {
                    op: *op,
                    a: x,
                    b: y,
                    t,
                    f,
                    bad,
                });
            }
            Expr::And(args) | Expr::Or(args) => {
                let is_and = matches!(e, Expr::And(_));
                if args.is_empty() {
                    self.emit(Instr::Jump {
                        target: if is_and { t } else { f },
                    });
                    return;
                }
                for (i, a) in args.iter().enumerate() {
                    if i + 1 == args.len() {
                        self.cond(a, t, f, bad);
                    } else {
                        let next = self.new_label();
                        if is_and {
                            self.cond(a, next, f, bad);
                        } else {
                            self.cond(a, t, next, bad);
                        }
                        self.place(next);
                    }
                }
            }
            Expr::Call(name, args) if args.len() == 1 && is_named(name, "ISTRUE") => self.cond(&args[0], t, f, f),
            Expr::Call(name, args) if args.len() == 1 && is_named(name, "ISFALSE") => self.cond(&args[0], f, t, f),
            Expr::If(c, a, b) => {
                let (lt, lf) = (self.new_label(), self.new_label());
                self.cond(c, lt, lf, bad);
                self.place(lt);
                self.cond(a, t, f, bad);
                self.place(lf);
                self.cond(b, t, f, bad);
            }
            Expr::Cached(c) => match self.cached(c) {
                R::F(r) => self.emit(Instr::BrCond { src: r, t, f, bad }),
                R::V(r) => self.emit(Instr::BrCondV { src: r, t, f, bad }),
            },
            _ if self.is_num(e) => {
                let r = self.num(e);
                self.emit(Instr::BrCond { src: r, t, f, bad });
            }
            _ => {
                let r = self.val(e);
                self.emit(Instr::BrCondV { src: r, t, f, bad });
            }
        }
    }

    // Tail position: the result is returned, and calls become tail calls.
    fn ret(&mut self, e: &Expr) {
        match e {
            Expr::If(c, a, b) => {
                let (lt, lf, bad) = (self.new_label(), self.new_label(), self.new_label());
                self.cond(c, lt, lf, bad);
                self.place(lt);
                self.ret(a);
                self.place(lf);
                self.ret(b);
                self.place(bad);
                self.emit(Instr::Return { src: self.scratch });
            }
            Expr::Choose(s, args) => {
                let sel = self.num(s);
                let targets: Vec<Pc> = args.iter().map(|_| self.new_label()).collect();
                let (bad, oob) = (self.new_label(), self.new_label());
                self.emit(Instr::Switch {
                    src: sel,
                    targets: targets.clone(),
                    bad,
                    out_of_range: oob,
                });
                for (a, l) in args.iter().zip(targets) {
                    self.place(l);
                    self.ret(a);
                }
                self.place(bad);
                self.emit(Instr::Return { src: self.scratch });
                self.place(oob);
                let d = self.const_v(Value::Error(ErrorValue::VALUE), None);
                self.emit(Instr::Return { src: d });
            }
            Expr::SdfCall(r, args) => {
                let regs = self.call_args(args);
                self.emit(Instr::TailCall {
                    target: r.id,
                    name: r.name.clone(),
                    args: regs,
                });
            }
            Expr::Apply(f, args) => {
                let fr = self.val(f);
                let regs = self.call_args(args);
                self.emit(Instr::TailApply { f: fr, args: regs });
            }
            _ if self.is_num(e) => {
                let r = self.num(e);
                let d = self.box_to(r, None);
                self.emit(Instr::Return { src: d });
            }
            _ => {
                let d = self.val(e);
                self.emit(Instr::Return { src: d });
            }
        }
    }

    // Drops jumps to the next instruction and resolves labels.
    fn finish(&mut self) -> Vec<Instr> {
        let mut items = std::mem::take(&mut self.items);
        loop {
            let mut changed = false;
            let mut i = 0;
            while i < items.len() {
                if let Item::Op(Instr::Jump { target }) = &items[i] {
                    let mut j = i + 1;
                    let mut falls_through = false;
                    while let Some(Item::Label(l)) = items.get(j) {
                        if l == target {
                            falls_through = true;
                            break;
                        }
                        j += 1;
                    }
                    if falls_through {
                        items.remove(i);
                        changed = true;
                        continue;
                    }
                }
                i += 1;
            }
            if !changed {
                break;
            }
        }
        let mut pc_of = vec![0 as Pc; self.n_labels as usize];
        let mut pc = 0;
        for it in &items {
            match it {
                Item::Label(l) => pc_of[*l as usize] = pc,
                Item::Op(_) => pc += 1,
            }
        }
        items
            .into_iter()
            .filter_map(|it| match it {
                Item::Op(mut ins) => {
                    retarget(&mut ins, &pc_of);
                    Some(ins)
                }
                Item::Label(_) => None,
            })
            .collect()
    }
}

fn retarget(ins: &mut Instr, pc_of: &[Pc]) {
    let m = |p: &mut Pc| *p = pc_of[*p as usize];
    match ins {
        Instr::Jump { target } | Instr::BrNan { target, .. } | Instr::BrErr { target, .. } | Instr::Memo { target, .. } => {
            m(target)
        }
        Instr::Force { thunk, .. } => m(thunk),
        Instr::BrCond { t, f, bad, .. } | Instr::BrCondV { t, f, bad, .. } | Instr::BrCmpV { t, f, bad, .. } => {
            m(t);
            m(f);
            m(bad);
        }
        Instr::BrCmp { t, f, .. } => {
            m(t);
            m(f);
        }
        Instr::Switch {
            targets,
            bad,
            out_of_range,
            ..
        } => {
            targets.iter_mut().for_each(m);
            m(bad);
            m(out_of_range);
        }
        _ => {}
    }
}
