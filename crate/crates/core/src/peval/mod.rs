//! Online polyvariant partial evaluation: the SPECIALIZE builtin.
//!
//! Specialization rewrites a function's scheduled body with respect to the
//! closure's captured arguments. Static cells fold into constants that are
//! inlined at their uses; every other cell becomes a residual cell. Calls
//! are never unfolded: each becomes a call to a specialized variant of the
//! callee, looked up in or added to the workbook's specialization cache.
//! Under dynamic control, a recursive call keeps only the static arguments
//! that agree with the active specialization of the same function.

mod simplify;

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::Arc;

pub use simplify::simplify_arith;

use crate::engine::{kernels, BuiltinKind, Scope, Workbook};
use crate::formula::{CellPos, Expr, SdfRef};
use crate::sdf::{build_function, make_closure, BodySource, EvalCond, SdfId, SdfInfo, SpecKey};
use crate::trace::TraceEvent;
use crate::values::{ErrorValue, FunctionValue, Value};

/// Static arguments by position; `None` marks a dynamic argument.
pub type Pattern = Vec<Option<Value>>;

#[derive(Debug)]
enum Failure {
    Limit(SdfId),
    Build(String),
}

/// `SPECIALIZE(v)`.
pub fn specialize_value(wb: &Workbook, v: &Value) -> Value {
    match v {
        Value::Function(fv) => specialize(wb, fv),
        Value::Error(e) => Value::Error(*e),
        _ => Value::Error(ErrorValue::VALUE),
    }
}

/// Specializes the closure's function with respect to its captured
/// arguments and returns a closure over the residual function, with one
/// hole per hole of `fv`. Returns `fv` itself when nothing is static or
/// when the specialization limit is reached.
pub fn specialize(wb: &Workbook, fv: &Arc<FunctionValue>) -> Value {
    wb.ensure_functions();
    let Some(info) = wb.function(fv.target) else {
        return Value::Error(ErrorValue::NAME);
    };
    let pattern: Pattern = fv.captured.clone();
    if pattern.iter().all(Option::is_none) {
        wb.emit_trace(TraceEvent::new("original", &info.name, &show_pattern(&pattern), "call original"));
        return Value::Function(fv.clone());
    }
    let mut pe = Specializer::new(wb);
    match pe.run(&info, pattern) {
        Ok(id) => match wb.function(id) {
            Some(spec) => spec.open_closure(),
            None => Value::Function(fv.clone()),
        },
        Err(failure) => {
            pe.roll_back();
            let (event, action) = match failure {
                Failure::Limit(target) => {
                    let name = wb.function(target).map(|i| i.name.to_string()).unwrap_or_default();
                    ("limit-exceeded", format!("more than {} specializations of {name}; returning original", pe.limit))
                }
                Failure::Build(msg) => ("build-failed", format!("{msg}; returning original")),
            };
            wb.emit_trace(TraceEvent::new(event, &info.name, &show_pattern(&fv.captured), &action));
            Value::Function(fv.clone())
        }
    }
}

/// Renders a pattern as `(v1,#NA,...)`.
pub fn show_pattern(p: &[Option<Value>]) -> String {
    let parts: Vec<String> = p
        .iter()
        .map(|a| match a {
            Some(v) => v.literal(),
            None => "#NA".to_string(),
        })
        .collect();
    format!("({})", parts.join(","))
}

struct Job {
    id: SdfId,
    target: Arc<SdfInfo>,
    pattern: Pattern,
    /// Active specializations from the root to this one, inclusive.
    stack: Vec<(SdfId, Pattern)>,
}

#[derive(Clone)]
enum Binding {
    Static(Value),
    Dyn,
    /// A cell whose evaluation condition folded to false; processed only
    /// if something turns out to reference it.
    Pending(usize),
}

struct Specializer<'a> {
    wb: &'a Workbook,
    limit: usize,
    strict: bool,
    jobs: VecDeque<Job>,
    counts: HashMap<SdfId, usize>,
    table_len: usize,
    new_keys: Vec<SpecKey>,
    // Per job:
    stack: Vec<(SdfId, Pattern)>,
    env: HashMap<CellPos, Binding>,
    residual: BTreeMap<CellPos, Expr>,
    body: Option<Arc<SdfInfo>>,
}

impl<'a> Specializer<'a> {
    fn new(wb: &'a Workbook) -> Specializer<'a> {
        Specializer {
            wb,
            limit: wb.config().spec_limit,
            strict: wb.config().strict_simplify,
            jobs: VecDeque::new(),
            counts: HashMap::new(),
            table_len: wb.functions.borrow().len(),
            new_keys: Vec::new(),
            stack: Vec::new(),
            env: HashMap::new(),
            residual: BTreeMap::new(),
            body: None,
        }
    }

    fn run(&mut self, root: &Arc<SdfInfo>, pattern: Pattern) -> Result<SdfId, Failure> {
        let id = self.request(root.id, pattern)?.unwrap_or(root.id);
        while let Some(job) = self.jobs.pop_front() {
            let source = self.pe_body(&job)?;
            let name = self.wb.functions.borrow().name(job.id).cloned().unwrap_or_else(|| Arc::from("?"));
            let info = build_function(self.wb, job.id, name, source, Some((job.target.id, job.pattern.clone())))
                .map_err(|e| Failure::Build(e.to_string()))?;
            self.wb.functions.borrow_mut().install(info);
        }
        Ok(id)
    }

    fn roll_back(&mut self) {
        self.wb.functions.borrow_mut().truncate(self.table_len);
        let mut cache = self.wb.spec_cache.borrow_mut();
        for k in self.new_keys.drain(..) {
            cache.map.remove(&k);
        }
    }

    /// Returns the function to call for `target` with `pattern`, creating a
    /// new specialization if needed; `None` means the original.
    fn request(&mut self, target: SdfId, pattern: Pattern) -> Result<Option<SdfId>, Failure> {
        let Some(info) = self.wb.function(target) else {
            return Ok(None);
        };
        let shown = show_pattern(&pattern);
        if pattern.iter().all(Option::is_none) {
            self.wb.emit_trace(TraceEvent::new("original", &info.name, &shown, "call original"));
            return Ok(None);
        }
        let key: SpecKey = (target, pattern);
        if let Some(&id) = self.wb.spec_cache.borrow().map.get(&key) {
            let name = self.wb.functions.borrow().name(id).cloned().unwrap_or_default();
            self.wb.emit_trace(TraceEvent::new("cache-hit", &info.name, &shown, &name));
            return Ok(Some(id));
        }
        let count = self.counts.entry(target).or_insert(0);
        *count += 1;
        if *count > self.limit {
            return Err(Failure::Limit(target));
        }
        let (target, pattern) = key;
        let id = {
            let mut table = self.wb.functions.borrow_mut();
            let next = table.len();
            let display = FunctionValue {
                target,
                name: info.name.clone(),
                captured: pattern.clone(),
            };
            let name = format!("{display}#{next}");
            let id = table.reserve(&name);
            debug_assert_eq!(id.0 as usize, next);
            id
        };
        let name = self.wb.functions.borrow().name(id).cloned().unwrap_or_default();
        self.wb.emit_trace(TraceEvent::new("new-specialization", &info.name, &shown, &name));
        self.wb.spec_cache.borrow_mut().map.insert((target, pattern.clone()), id);
        self.new_keys.push((target, pattern.clone()));
        let mut stack = self.stack.clone();
        stack.push((target, pattern.clone()));
        self.jobs.push_back(Job {
            id,
            target: info,
            pattern,
            stack,
        });
        Ok(Some(id))
    }

    fn pe_body(&mut self, job: &Job) -> Result<BodySource, Failure> {
        self.stack = job.stack.clone();
        self.env.clear();
        self.residual.clear();
        self.body = Some(job.target.clone());
        let target = job.target.clone();

        let mut inputs = Vec::new();
        for (pos, p) in target.inputs.iter().zip(&job.pattern) {
            match p {
                Some(v) => {
                    self.env.insert(*pos, Binding::Static(v.clone()));
                }
                None => {
                    self.env.insert(*pos, Binding::Dyn);
                    inputs.push(*pos);
                }
            }
        }
        let last = target.body.len().saturating_sub(1);
        for (i, cc) in target.body.iter().enumerate() {
            if i == last {
                self.process(i, false)?;
                continue;
            }
            match &cc.cond {
                EvalCond::Always => self.process(i, false)?,
                EvalCond::OnDemand => self.process(i, true)?,
                EvalCond::When(g) => {
                    let g = self.pe(g, false, true)?;
                    match g.as_const() {
                        Some(v) if kernels::truth(&v) == Ok(true) => self.process(i, false)?,
                        Some(_) => {
                            self.env.insert(cc.cell, Binding::Pending(i));
                        }
                        None => self.process(i, true)?,
                    }
                }
            }
        }
        let output = target.output;
        if let Some(Binding::Static(v)) = self.env.get(&output) {
            self.residual.insert(output, Expr::from_value(v));
        }
        Ok(BodySource {
            sheet: target.source.sheet.clone(),
            inputs,
            output,
            cells: std::mem::take(&mut self.residual),
        })
    }

    fn process(&mut self, i: usize, dynamic: bool) -> Result<(), Failure> {
        let body = self.body.clone().expect("a job is active");
        let cc = &body.body[i];
        let r = self.pe(&cc.expr, dynamic, false)?;
        match r.as_const() {
            Some(v) => {
                self.env.insert(cc.cell, Binding::Static(v));
            }
            None => {
                let is_input = body.inputs.contains(&cc.cell);
                self.env.insert(cc.cell, Binding::Dyn);
                if !is_input {
                    self.residual.insert(cc.cell, r);
                }
            }
        }
        Ok(())
    }

    fn lookup(&mut self, pos: CellPos, probe: bool) -> Result<Expr, Failure> {
        match self.env.get(&pos).cloned() {
            Some(Binding::Static(v)) => Ok(Expr::from_value(&v)),
            Some(Binding::Pending(i)) if !probe => {
                self.process(i, true)?;
                self.lookup(pos, probe)
            }
            _ => Ok(Expr::local_ref(pos)),
        }
    }

    fn pe_all(&mut self, args: &[Expr], dynamic: bool, probe: bool) -> Result<Vec<Expr>, Failure> {
        args.iter().map(|a| self.pe(a, dynamic, probe)).collect()
    }

    // Evaluates an expression whose operands are all constants.
    fn fold(&self, e: &Expr) -> Expr {
        Expr::from_value(&self.wb.eval(e, &Scope::Empty))
    }

    /// Partially evaluates `e`. `dynamic` is set under dynamic control.
    /// In `probe` mode (used for evaluation conditions) calls are left
    /// residual without creating specializations.
    fn pe(&mut self, e: &Expr, dynamic: bool, probe: bool) -> Result<Expr, Failure> {
        Ok(match e {
            Expr::Number(_) | Expr::Text(_) | Expr::Error(_) | Expr::Const(_) => e.clone(),
            Expr::CellRef(a) => self.lookup(a.pos, probe)?,
            Expr::NormalCellRef(_) | Expr::NormalCellArea(..) => e.clone(),
            Expr::Unary(op, x) => {
                let x = self.pe(x, dynamic, probe)?;
                let constant = x.is_const();
                let r = Expr::Unary(*op, Box::new(x));
                if constant {
                    self.fold(&r)
                } else {
                    r
                }
            }
            Expr::Binary(op, a, b) => {
                let a = self.pe(a, dynamic, probe)?;
                let b = self.pe(b, dynamic, probe)?;
                if a.is_const() && b.is_const() {
                    self.fold(&Expr::Binary(*op, Box::new(a), Box::new(b)))
                } else {
                    simplify_arith(*op, a, b, self.strict)
                }
            }
            Expr::Compare(op, a, b) => {
                let a = self.pe(a, dynamic, probe)?;
                if let Some(Value::Error(err)) = a.as_const() {
                    return Ok(Expr::Error(err));
                }
                let b = self.pe(b, dynamic, probe)?;
                let constant = a.is_const() && b.is_const();
                let r = Expr::Compare(*op, Box::new(a), Box::new(b));
                if constant {
                    self.fold(&r)
                } else {
                    r
                }
            }
            Expr::Call(name, args) => {
                let args = self.pe_all(args, dynamic, probe)?;
                match self.wb.builtins().get(name).cloned() {
                    Some(b) => {
                        let residual = b.volatile || matches!(b.kind, BuiltinKind::Special(_));
                        if !residual && args.iter().all(Expr::is_const) {
                            self.fold(&Expr::Call(name.clone(), args))
                        } else {
                            Expr::Call(name.clone(), args)
                        }
                    }
                    None => match self.wb.function_id(name) {
                        Some(id) if !probe => self.call(id, args, dynamic)?,
                        _ => Expr::Call(name.clone(), args),
                    },
                }
            }
            Expr::SdfCall(r, args) => {
                let args = self.pe_all(args, dynamic, probe)?;
                if probe {
                    Expr::SdfCall(r.clone(), args)
                } else {
                    self.call(r.id, args, dynamic)?
                }
            }
            Expr::MakeClosure(args) => {
                let args = self.pe_all(args, dynamic, probe)?;
                if args.iter().all(Expr::is_const) {
                    let vals: Vec<Value> = args.iter().map(|a| a.as_const().unwrap()).collect();
                    Expr::from_value(&make_closure(self.wb, &vals[0], &vals[1..]))
                } else {
                    Expr::MakeClosure(args)
                }
            }
            Expr::Apply(f, args) => {
                let f = self.pe(f, dynamic, probe)?;
                let args = self.pe_all(args, dynamic, probe)?;
                match f.as_const() {
                    Some(Value::Function(fv)) if fv.arity() == args.len() && !probe => {
                        let mut rest = args.into_iter();
                        let merged: Vec<Expr> = fv
                            .captured
                            .iter()
                            .map(|c| match c {
                                Some(v) => Expr::from_value(v),
                                None => rest.next().unwrap(),
                            })
                            .collect();
                        self.call(fv.target, merged, dynamic)?
                    }
                    _ => Expr::Apply(Box::new(f), args),
                }
            }
            Expr::If(c, a, b) => {
                let c = self.pe(c, dynamic, probe)?;
                match c.as_const() {
                    Some(v) => match kernels::truth(&v) {
                        Ok(true) => self.pe(a, dynamic, probe)?,
                        Ok(false) => self.pe(b, dynamic, probe)?,
                        Err(err) => Expr::Error(err),
                    },
                    None => {
                        let a = self.pe(a, true, probe)?;
                        let b = self.pe(b, true, probe)?;
                        Expr::If(Box::new(c), Box::new(a), Box::new(b))
                    }
                }
            }
            Expr::Choose(s, args) => {
                let s = self.pe(s, dynamic, probe)?;
                match s.as_const() {
                    Some(Value::Number(d)) => match kernels::choose_index(d, args.len()) {
                        Some(i) => self.pe(&args[i], dynamic, probe)?,
                        None => Expr::Error(ErrorValue::VALUE),
                    },
                    Some(Value::Error(err)) => Expr::Error(err),
                    Some(_) => Expr::Error(ErrorValue::VALUE),
                    None => {
                        let args = self.pe_all(args, true, probe)?;
                        Expr::Choose(Box::new(s), args)
                    }
                }
            }
            Expr::And(args) => self.pe_junction(args, true, dynamic, probe)?,
            Expr::Or(args) => self.pe_junction(args, false, dynamic, probe)?,
            Expr::Cached(c) => self.pe(&c.expr, dynamic, probe)?,
        })
    }

    // AND (is_and) or OR, left to right. An argument equal to the neutral
    // element is dropped and an absorbing one ends the list. In strict
    // mode, residual arguments before an absorbing constant are kept so
    // their errors still surface.
    fn pe_junction(&mut self, args: &[Expr], is_and: bool, dynamic: bool, probe: bool) -> Result<Expr, Failure> {
        let mut kept = Vec::new();
        let mut dynamic = dynamic;
        for a in args {
            let r = self.pe(a, dynamic, probe)?;
            match r.as_const() {
                Some(v) => match kernels::truth(&v) {
                    Ok(b) if b == is_and => {}
                    Ok(_) => {
                        if kept.is_empty() || !self.strict {
                            return Ok(Expr::Number(if is_and { 0.0 } else { 1.0 }));
                        }
                        kept.push(r);
                        break;
                    }
                    Err(err) => {
                        if kept.is_empty() {
                            return Ok(Expr::Error(err));
                        }
                        kept.push(r);
                        break;
                    }
                },
                None => {
                    kept.push(r);
                    // Later arguments are evaluated only if this one is
                    // not absorbing.
                    dynamic = true;
                }
            }
        }
        Ok(if kept.is_empty() {
            Expr::Number(if is_and { 1.0 } else { 0.0 })
        } else if is_and {
            Expr::And(kept)
        } else {
            Expr::Or(kept)
        })
    }

    /// A residual call of `target` on reduced arguments.
    fn call(&mut self, target: SdfId, args: Vec<Expr>, dynamic: bool) -> Result<Expr, Failure> {
        let Some(info) = self.wb.function(target) else {
            return Ok(self.residual_call(target, None, args));
        };
        if args.len() != info.arity() {
            return Ok(self.residual_call(target, Some(info.name.clone()), args));
        }
        let mut pattern: Pattern = args.iter().map(Expr::as_const).collect();
        if dynamic {
            if let Some((_, active)) = self.stack.iter().rev().find(|(t, _)| *t == target) {
                let before = pattern.clone();
                for (p, v) in pattern.iter_mut().zip(active) {
                    if p.is_some() && p != v {
                        *p = None;
                    }
                }
                if pattern != before {
                    self.wb.emit_trace(TraceEvent::new(
                        "generalized",
                        &info.name,
                        &show_pattern(&before),
                        &show_pattern(&pattern),
                    ));
                }
            }
        }
        match self.request(target, pattern.clone())? {
            None => Ok(self.residual_call(target, Some(info.name.clone()), args)),
            Some(id) => {
                let name = self.wb.functions.borrow().name(id).cloned();
                let dyn_args = args
                    .into_iter()
                    .zip(&pattern)
                    .filter(|(_, p)| p.is_none())
                    .map(|(a, _)| a)
                    .collect();
                Ok(self.residual_call(id, name, dyn_args))
            }
        }
    }

    fn residual_call(&self, id: SdfId, name: Option<Arc<str>>, args: Vec<Expr>) -> Expr {
        let name = name
            .or_else(|| self.wb.functions.borrow().name(id).cloned())
            .unwrap_or_else(|| Arc::from("?"));
        Expr::SdfCall(SdfRef { id, name }, args)
    }
}
