//! Workbook model, interpretive evaluation and recalculation.

pub mod builtins;
mod eval;
pub mod kernels;

use std::cell::{Cell, RefCell};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg32;

pub use builtins::{Builtin, BuiltinKind, Builtins, DuplicateBuiltin, Num0, Special};
pub(crate) use eval::{Frame, Scope};

use crate::formula::{error_literal, parse_formula, CellAddr, CellPos, Expr, ParseError};
use crate::sdf::{FunctionTable, SdfId, SdfInfo, SpecCache};
use crate::trace::TraceEvent;
use crate::values::{ErrorValue, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SheetKind {
    Ordinary,
    Function,
}

/// Engine settings.
#[derive(Clone, Debug)]
pub struct Config {
    /// New specializations allowed per function within one SPECIALIZE.
    pub spec_limit: usize,
    /// Restrict partial-evaluation simplifications to ones that preserve
    /// error results.
    pub strict_simplify: bool,
    /// Inline cells that are referenced exactly once.
    pub inline_cells: bool,
    /// Maximum nesting of non-tail function calls.
    pub max_call_depth: usize,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Config {
        Config {
            spec_limit: 100,
            strict_simplify: false,
            inline_cells: true,
            max_call_depth: 1000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub enum CellContent {
    Constant(Value),
    Formula(Expr),
}

#[derive(Clone, Debug)]
enum CacheState {
    Stale,
    InProgress(u64),
    Done(u64, Value),
}

#[derive(Debug)]
pub struct CellData {
    /// The text the cell was set from.
    pub input: String,
    pub content: CellContent,
    cache: RefCell<CacheState>,
}

#[derive(Debug)]
pub struct Sheet {
    pub name: Arc<str>,
    pub kind: SheetKind,
    pub cells: BTreeMap<CellPos, CellData>,
}

#[derive(Debug, thiserror::Error)]
pub enum WorkbookError {
    #[error("unknown sheet '{0}'")]
    UnknownSheet(String),
    #[error("sheet '{0}' already exists")]
    DuplicateSheet(String),
    #[error("bad cell address '{0}'")]
    BadAddress(String),
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error("the workbook has no sheets")]
    NoSheets,
}

/// Counters maintained by the compiled code path.
#[derive(Debug, Default)]
pub struct Stats {
    pub boxes: Cell<u64>,
    pub calls: Cell<u64>,
}

type TraceSink = Box<dyn FnMut(&TraceEvent)>;

/// A set of sheets plus the function table.
///
/// Evaluation takes `&self`: caches, the function table and the random
/// generator live in cells. A workbook is confined to one thread.
pub struct Workbook {
    sheets: Vec<Sheet>,
    sheet_index: HashMap<String, usize>,
    builtins: Builtins,
    pub(crate) functions: RefCell<FunctionTable>,
    pub(crate) spec_cache: RefCell<SpecCache>,
    pub(crate) config: Config,
    rng: RefCell<Pcg32>,
    trace: RefCell<Option<TraceSink>>,
    pub stats: Stats,
    pub(crate) depth: Cell<usize>,
    generation: Cell<u64>,
    functions_dirty: Cell<bool>,
    pub(crate) define_errors: RefCell<HashMap<(usize, CellPos), (ErrorValue, String)>>,
    eval_stack: RefCell<Vec<(usize, CellPos)>>,
    on_cycle: RefCell<HashSet<(usize, CellPos)>>,
}

impl Default for Workbook {
    fn default() -> Workbook {
        Workbook::new()
    }
}

impl Workbook {
    pub fn new() -> Workbook {
        Workbook::with_config(Config::default())
    }

    pub fn with_config(config: Config) -> Workbook {
        Workbook {
            sheets: Vec::new(),
            sheet_index: HashMap::new(),
            builtins: Builtins::standard(),
            functions: RefCell::new(FunctionTable::default()),
            spec_cache: RefCell::new(SpecCache::default()),
            rng: RefCell::new(Pcg32::seed_from_u64(config.seed)),
            config,
            trace: RefCell::new(None),
            stats: Stats::default(),
            depth: Cell::new(0),
            generation: Cell::new(1),
            functions_dirty: Cell::new(false),
            define_errors: RefCell::new(HashMap::new()),
            eval_stack: RefCell::new(Vec::new()),
            on_cycle: RefCell::new(HashSet::new()),
        }
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn config_mut(&mut self) -> &mut Config {
        &mut self.config
    }

    /// Reseeds the random generator used by RAND.
    pub fn seed(&self, seed: u64) {
        *self.rng.borrow_mut() = Pcg32::seed_from_u64(seed);
    }

    pub(crate) fn random(&self) -> f64 {
        self.rng.borrow_mut().random::<f64>()
    }

    pub fn builtins(&self) -> &Builtins {
        &self.builtins
    }

    pub fn register_builtin(&mut self, b: Builtin) -> Result<(), DuplicateBuiltin> {
        self.builtins.register(b)
    }

    /// Installs a consumer for specialization diagnostics.
    pub fn set_trace_sink(&self, sink: impl FnMut(&TraceEvent) + 'static) {
        *self.trace.borrow_mut() = Some(Box::new(sink));
    }

    pub(crate) fn emit_trace(&self, event: TraceEvent) {
        if let Some(sink) = self.trace.borrow_mut().as_mut() {
            sink(&event);
        }
    }

    // Sheets

    pub fn add_sheet(&mut self, name: &str, kind: SheetKind) -> Result<usize, WorkbookError> {
        let key = name.to_ascii_uppercase();
        if self.sheet_index.contains_key(&key) {
            return Err(WorkbookError::DuplicateSheet(name.to_string()));
        }
        self.sheets.push(Sheet {
            name: Arc::from(name),
            kind,
            cells: BTreeMap::new(),
        });
        let idx = self.sheets.len() - 1;
        self.sheet_index.insert(key, idx);
        if kind == SheetKind::Function {
            self.functions_dirty.set(true);
        }
        Ok(idx)
    }

    pub fn sheet_index(&self, name: &str) -> Option<usize> {
        self.sheet_index
            .get(name)
            .or_else(|| self.sheet_index.get(&name.to_ascii_uppercase()))
            .copied()
    }

    pub fn sheets(&self) -> &[Sheet] {
        &self.sheets
    }

    pub fn sheet(&self, idx: usize) -> &Sheet {
        &self.sheets[idx]
    }

    fn resolve_addr(&self, addr: &CellAddr) -> Result<usize, WorkbookError> {
        match &addr.sheet {
            Some(s) => self
                .sheet_index(s)
                .ok_or_else(|| WorkbookError::UnknownSheet(s.to_string())),
            None => (!self.sheets.is_empty())
                .then_some(0)
                .ok_or(WorkbookError::NoSheets),
        }
    }

    fn parse_addr(&self, text: &str) -> Result<(usize, CellPos), WorkbookError> {
        let addr = CellAddr::parse(text).ok_or_else(|| WorkbookError::BadAddress(text.to_string()))?;
        Ok((self.resolve_addr(&addr)?, addr.pos))
    }

    /// Sets a cell from input text: `=formula`, a number, an error
    /// literal, `"quoted text"` or bare text. Empty input clears the cell.
    pub fn set_cell(&mut self, sheet: usize, pos: CellPos, input: &str) -> Result<(), WorkbookError> {
        let trimmed = input.trim();
        let sh = &mut self.sheets[sheet];
        if trimmed.is_empty() {
            sh.cells.remove(&pos);
        } else {
            let content = parse_cell_input(trimmed)?;
            sh.cells.insert(
                pos,
                CellData {
                    input: trimmed.to_string(),
                    content,
                    cache: RefCell::new(CacheState::Stale),
                },
            );
        }
        if sh.kind == SheetKind::Function {
            self.functions_dirty.set(true);
        }
        self.generation.set(self.generation.get() + 1);
        Ok(())
    }

    /// Sets a cell addressed as `Sheet!A1` (or `A1` on the first sheet).
    pub fn set(&mut self, addr: &str, input: &str) -> Result<(), WorkbookError> {
        let (sheet, pos) = self.parse_addr(addr)?;
        self.set_cell(sheet, pos, input)
    }

    pub fn cell(&self, sheet: usize, pos: CellPos) -> Option<&CellData> {
        self.sheets[sheet].cells.get(&pos)
    }

    /// The current value of a cell, evaluating on demand.
    pub fn get(&self, addr: &str) -> Result<Value, WorkbookError> {
        let (sheet, pos) = self.parse_addr(addr)?;
        Ok(self.value_at(sheet, pos))
    }

    pub fn value_at(&self, sheet: usize, pos: CellPos) -> Value {
        self.ensure_functions();
        self.cell_value(sheet, pos)
    }

    /// Evaluates a formula (with or without `=`) in the context of a sheet.
    pub fn eval_formula(&self, sheet: usize, text: &str) -> Result<Value, ParseError> {
        let text = text.trim();
        let e = if text.starts_with('=') {
            parse_formula(text)?
        } else {
            crate::formula::parse_expr(text)?
        };
        self.ensure_functions();
        Ok(self.eval(&e, &Scope::Sheet(sheet)))
    }

    /// Starts a new recalculation generation and evaluates every formula
    /// cell on ordinary sheets.
    pub fn recalculate(&self) {
        self.generation.set(self.generation.get() + 1);
        self.ensure_functions();
        for (idx, sheet) in self.sheets.iter().enumerate() {
            if sheet.kind != SheetKind::Ordinary {
                continue;
            }
            for (pos, cell) in &sheet.cells {
                if matches!(cell.content, CellContent::Formula(_)) {
                    self.cell_value(idx, *pos);
                }
            }
        }
    }

    pub fn generation(&self) -> u64 {
        self.generation.get()
    }

    /// Cell evaluation with per-generation memoization and cycle marking.
    pub(crate) fn cell_value(&self, sheet: usize, pos: CellPos) -> Value {
        let Some(cell) = self.sheets[sheet].cells.get(&pos) else {
            return Value::ZERO;
        };
        let expr = match &cell.content {
            CellContent::Constant(v) => return v.clone(),
            CellContent::Formula(e) => e,
        };
        let gen = self.generation.get();
        let state = cell.cache.borrow().clone();
        match state {
            CacheState::Done(g, v) if g == gen => return v,
            CacheState::InProgress(g) if g == gen => {
                let stack = self.eval_stack.borrow();
                let mut on_cycle = self.on_cycle.borrow_mut();
                if let Some(start) = stack.iter().position(|&k| k == (sheet, pos)) {
                    on_cycle.extend(stack[start..].iter().copied());
                }
                return Value::Error(ErrorValue::CYCLE);
            }
            _ => {}
        }
        *cell.cache.borrow_mut() = CacheState::InProgress(gen);
        self.eval_stack.borrow_mut().push((sheet, pos));
        let mut v = self.eval(expr, &Scope::Sheet(sheet));
        self.eval_stack.borrow_mut().pop();
        if self.on_cycle.borrow_mut().remove(&(sheet, pos)) {
            v = Value::Error(ErrorValue::CYCLE);
        }
        *cell.cache.borrow_mut() = CacheState::Done(gen, v.clone());
        v
    }

    pub(crate) fn eval_stack_top(&self) -> Option<CellPos> {
        self.eval_stack.borrow().last().map(|&(_, p)| p)
    }

    // Functions

    /// Runs the DEFINEs on function sheets if anything there changed.
    pub fn ensure_functions(&self) {
        if self.functions_dirty.replace(false) {
            crate::sdf::define::define_all(self);
        }
    }

    pub fn function(&self, id: SdfId) -> Option<Arc<SdfInfo>> {
        self.functions.borrow().get(id)
    }

    pub fn function_by_name(&self, name: &str) -> Option<Arc<SdfInfo>> {
        self.ensure_functions();
        let table = self.functions.borrow();
        table.lookup(name).and_then(|id| table.get(id))
    }

    pub(crate) fn function_id(&self, name: &str) -> Option<SdfId> {
        self.functions.borrow().lookup(name)
    }

    /// All defined functions, in id order.
    pub fn list_functions(&self) -> Vec<Arc<SdfInfo>> {
        self.ensure_functions();
        self.functions.borrow().all()
    }

    /// Diagnostics from the last DEFINE pass, one per failed DEFINE cell.
    pub fn define_diagnostics(&self) -> Vec<String> {
        self.ensure_functions();
        let errors = self.define_errors.borrow();
        let mut out: Vec<_> = errors
            .iter()
            .map(|((s, p), (_, msg))| (self.sheets[*s].name.clone(), *p, msg.clone()))
            .collect();
        out.sort();
        out.into_iter()
            .map(|(s, p, msg)| format!("{}: {msg}", CellAddr::on(&s, p)))
            .collect()
    }

    /// Calls a function by name with the given arguments.
    pub fn call(&self, name: &str, args: &[Value]) -> Value {
        self.ensure_functions();
        match self.function_id(name) {
            Some(id) => self.call_sdf(id, args, false),
            None => Value::Error(ErrorValue::NAME),
        }
    }

    /// Calls a function through the interpreter, as a reference for the
    /// compiled code.
    pub fn call_interpreted(&self, id: SdfId, args: &[Value]) -> Value {
        self.ensure_functions();
        self.call_sdf(id, args, true)
    }

    /// Invokes a function. With `oracle` set, the body is interpreted from
    /// its source cells, and so are nested calls.
    pub(crate) fn call_sdf(&self, id: SdfId, args: &[Value], oracle: bool) -> Value {
        let Some(info) = self.function(id) else {
            return Value::Error(ErrorValue::NAME);
        };
        if args.len() != info.arity() {
            return Value::Error(ErrorValue::VALUE);
        }
        let depth = self.depth.get();
        if depth >= self.config.max_call_depth {
            return Value::Error(stack_error());
        }
        self.depth.set(depth + 1);
        let v = if oracle {
            self.interpret_body(&info, args)
        } else {
            crate::compile::exec::invoke(self, info, args)
        };
        self.depth.set(depth);
        v
    }

    fn interpret_body(&self, info: &Arc<SdfInfo>, args: &[Value]) -> Value {
        let frame = Frame::new(info, args);
        let scope = Scope::Frame(&frame);
        frame.cell(self, &scope, info.output)
    }

    /// Applies a closure to arguments for its holes.
    pub fn apply(&self, f: &Value, args: &[Value]) -> Value {
        self.apply_value(f, args, false)
    }

    /// APPLY semantics.
    pub(crate) fn apply_value(&self, f: &Value, args: &[Value], oracle: bool) -> Value {
        match f {
            Value::Function(fv) => match fv.merge_args(args) {
                Some(all) => self.call_sdf(fv.target, &all, oracle),
                None => Value::Error(ErrorValue::VALUE),
            },
            Value::Error(e) => Value::Error(*e),
            _ => Value::Error(ErrorValue::VALUE),
        }
    }
}

/// The error returned when the call depth limit is reached.
pub fn stack_error() -> ErrorValue {
    ErrorValue::intern("#STACK!")
}

/// Parses cell input text into cell content.
pub fn parse_cell_input(text: &str) -> Result<CellContent, ParseError> {
    let text = text.trim();
    if text.starts_with('=') {
        return Ok(CellContent::Formula(parse_formula(text)?));
    }
    Ok(CellContent::Constant(parse_constant(text)))
}

/// Interprets non-formula cell input as a constant.
pub fn parse_constant(text: &str) -> Value {
    if let Ok(d) = text.parse::<f64>() {
        if d.is_finite() && !text.chars().any(|c| c.is_ascii_alphabetic() && c != 'e' && c != 'E') {
            return Value::Number(d);
        }
    }
    if text.starts_with('#') {
        if let Some(e) = error_literal(text) {
            return Value::Error(e);
        }
    }
    if text.len() >= 2 && text.starts_with('"') && text.ends_with('"') {
        return Value::text(&text[1..text.len() - 1].replace("\"\"", "\""));
    }
    Value::text(text)
}
