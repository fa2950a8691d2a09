//! Sheet-defined functions: definition, closures and the front half of the
//! compilation pipeline.

pub mod define;
pub mod evalcond;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use crate::compile::CompiledFunction;
use crate::engine::Workbook;
use crate::formula::{CellPos, Expr};
use crate::values::{ErrorValue, FunctionValue, Value};

pub use define::{build_function, DefineError};

/// Index of a function in the workbook's function table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SdfId(pub u32);

impl fmt::Display for SdfId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// When a compute cell is evaluated.
#[derive(Clone, Debug, PartialEq)]
pub enum EvalCond {
    Always,
    /// Evaluated in order, but only when the condition is true.
    When(Expr),
    /// Evaluated on first use and memoized.
    OnDemand,
}

/// One assignment `slot <- expr` of a compiled function body.
#[derive(Clone, Debug, PartialEq)]
pub struct ComputeCell {
    pub cell: CellPos,
    pub slot: usize,
    pub expr: Expr,
    pub cond: EvalCond,
}

/// The cells a function was built from, after name resolution but before
/// inlining. The interpreter evaluates functions from this form.
#[derive(Clone, Debug)]
pub struct BodySource {
    pub sheet: Arc<str>,
    pub inputs: Vec<CellPos>,
    pub output: CellPos,
    pub cells: BTreeMap<CellPos, Expr>,
}

/// A sheet-defined function.
#[derive(Debug)]
pub struct SdfInfo {
    pub id: SdfId,
    pub name: Arc<str>,
    pub inputs: Vec<CellPos>,
    pub output: CellPos,
    /// Topologically ordered; the output cell is last.
    pub body: Vec<ComputeCell>,
    pub source: BodySource,
    pub compiled: CompiledFunction,
    /// Present for functions produced by SPECIALIZE.
    pub origin: Option<(SdfId, Vec<Option<Value>>)>,
    /// Notes from compilation, such as the lazy-evaluation fallback.
    pub notes: Vec<String>,
}

impl SdfInfo {
    pub fn arity(&self) -> usize {
        self.inputs.len()
    }

    /// The closure with every argument open.
    pub fn open_closure(&self) -> Value {
        Value::Function(Arc::new(FunctionValue {
            target: self.id,
            name: self.name.clone(),
            captured: vec![None; self.arity()],
        }))
    }

    /// Renders the body as `cell = formula` lines.
    pub fn render_body(&self) -> String {
        let mut out = String::new();
        for c in &self.body {
            out.push_str(&format!("{} = {}", c.cell, c.expr));
            match &c.cond {
                EvalCond::Always => {}
                EvalCond::When(g) => out.push_str(&format!("  when {g}")),
                EvalCond::OnDemand => out.push_str("  lazy"),
            }
            out.push('\n');
        }
        out
    }
}

/// Functions by id, with a name index. Names are case-insensitive.
#[derive(Debug, Default)]
pub struct FunctionTable {
    entries: Vec<Option<Arc<SdfInfo>>>,
    names: Vec<Arc<str>>,
    by_name: HashMap<String, SdfId>,
}

impl FunctionTable {
    pub fn get(&self, id: SdfId) -> Option<Arc<SdfInfo>> {
        self.entries.get(id.0 as usize).cloned().flatten()
    }

    pub fn lookup(&self, name: &str) -> Option<SdfId> {
        self.by_name
            .get(name)
            .or_else(|| self.by_name.get(&name.to_ascii_uppercase()))
            .copied()
    }

    pub fn name(&self, id: SdfId) -> Option<&Arc<str>> {
        self.names.get(id.0 as usize)
    }

    /// Returns the id for `name`, allocating an empty entry if needed.
    pub fn reserve(&mut self, name: &str) -> SdfId {
        if let Some(id) = self.lookup(name) {
            return id;
        }
        let id = SdfId(self.entries.len() as u32);
        self.entries.push(None);
        self.names.push(Arc::from(name));
        self.by_name.insert(name.to_ascii_uppercase(), id);
        id
    }

    pub fn install(&mut self, info: SdfInfo) {
        let i = info.id.0 as usize;
        self.names[i] = info.name.clone();
        self.entries[i] = Some(Arc::new(info));
    }

    pub fn clear(&mut self, id: SdfId) {
        self.entries[id.0 as usize] = None;
    }

    pub(crate) fn unname(&mut self, id: SdfId) {
        let key = self.names[id.0 as usize].to_ascii_uppercase();
        if self.by_name.get(&key) == Some(&id) {
            self.by_name.remove(&key);
        }
    }

    /// Drops every entry from `len` on. Used to roll back a failed
    /// specialization.
    pub(crate) fn truncate(&mut self, len: usize) {
        for i in len..self.entries.len() {
            self.unname(SdfId(i as u32));
        }
        self.entries.truncate(len);
        self.names.truncate(len);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn all(&self) -> Vec<Arc<SdfInfo>> {
        self.entries.iter().flatten().cloned().collect()
    }

    pub(crate) fn named_ids(&self) -> Vec<(String, SdfId)> {
        self.by_name.iter().map(|(k, v)| (k.clone(), *v)).collect()
    }
}

/// Specialization cache key: the function and the static arguments, with
/// `None` for dynamic positions.
pub type SpecKey = (SdfId, Vec<Option<Value>>);

#[derive(Debug, Default)]
pub struct SpecCache {
    pub map: HashMap<SpecKey, SdfId>,
}

/// `CLOSURE(f, args...)`. `f` is a function name or a closure; `#NA`
/// arguments stay open.
pub fn make_closure(wb: &Workbook, f: &Value, args: &[Value]) -> Value {
    let hole = |v: &Value| match v {
        Value::Error(ErrorValue::NA) => None,
        other => Some(other.clone()),
    };
    match f {
        Value::Text(name) => {
            let Some(info) = wb.function_id(name).and_then(|id| wb.function(id)) else {
                return Value::Error(ErrorValue::NAME);
            };
            if args.len() != info.arity() {
                return Value::Error(ErrorValue::VALUE);
            }
            Value::Function(Arc::new(FunctionValue {
                target: info.id,
                name: info.name.clone(),
                captured: args.iter().map(hole).collect(),
            }))
        }
        Value::Function(fv) => {
            if args.len() != fv.arity() {
                return Value::Error(ErrorValue::VALUE);
            }
            let mut rest = args.iter();
            let captured = fv
                .captured
                .iter()
                .map(|c| match c {
                    Some(v) => Some(v.clone()),
                    None => hole(rest.next().unwrap()),
                })
                .collect();
            Value::Function(Arc::new(FunctionValue {
                target: fv.target,
                name: fv.name.clone(),
                captured,
            }))
        }
        Value::Error(e) => Value::Error(*e),
        _ => Value::Error(ErrorValue::VALUE),
    }
}
