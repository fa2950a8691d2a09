//! Runtime values.
//!
//! Formulas are dynamically typed: every value carries its runtime tag. The
//! compiled code path works on naked `f64`s instead, and represents error
//! values as quiet NaNs whose payload identifies the error. The conversions
//! between the two representations live here.

use std::collections::HashMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, LazyLock, RwLock};

use crate::sdf::SdfId;

/// An error value such as `#NA` or `#DIV/0!`.
///
/// Errors are interned process-wide: the same name always maps to the same
/// index, and the index is what travels inside a NaN payload.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ErrorValue(u32);

struct ErrorTable {
    names: Vec<Arc<str>>,
    by_name: HashMap<Arc<str>, u32>,
}

impl ErrorTable {
    fn intern(&mut self, name: &str) -> u32 {
        if let Some(&i) = self.by_name.get(name) {
            return i;
        }
        let i = self.names.len() as u32;
        let name: Arc<str> = Arc::from(name);
        self.names.push(name.clone());
        self.by_name.insert(name, i);
        i
    }
}

/// Names of the built-in errors, in index order.
pub const BUILTIN_ERRORS: [&str; 7] = [
    "#NA", "#NUM!", "#DIV/0!", "#VALUE!", "#NAME?", "#REF!", "#CYCLE!",
];

static ERRORS: LazyLock<RwLock<ErrorTable>> = LazyLock::new(|| {
    let mut table = ErrorTable {
        names: Vec::new(),
        by_name: HashMap::new(),
    };
    for name in BUILTIN_ERRORS {
        table.intern(name);
    }
    RwLock::new(table)
});

impl ErrorValue {
    pub const NA: ErrorValue = ErrorValue(0);
    pub const NUM: ErrorValue = ErrorValue(1);
    pub const DIV0: ErrorValue = ErrorValue(2);
    pub const VALUE: ErrorValue = ErrorValue(3);
    pub const NAME: ErrorValue = ErrorValue(4);
    pub const REF: ErrorValue = ErrorValue(5);
    pub const CYCLE: ErrorValue = ErrorValue(6);

    pub fn builtins() -> [ErrorValue; 7] {
        [
            Self::NA,
            Self::NUM,
            Self::DIV0,
            Self::VALUE,
            Self::NAME,
            Self::REF,
            Self::CYCLE,
        ]
    }

    /// Returns the error with the given name, registering it if needed.
    pub fn intern(name: &str) -> ErrorValue {
        if let Some(&i) = ERRORS.read().unwrap().by_name.get(name) {
            return ErrorValue(i);
        }
        ErrorValue(ERRORS.write().unwrap().intern(name))
    }

    /// The user error produced by `ERR(msg)`.
    pub fn user(message: &str) -> ErrorValue {
        Self::intern(&format!("#ERR:{message}"))
    }

    /// Looks up a registered error by name without registering it.
    pub fn lookup(name: &str) -> Option<ErrorValue> {
        ERRORS.read().unwrap().by_name.get(name).map(|&i| ErrorValue(i))
    }

    pub fn from_index(index: u32) -> Option<ErrorValue> {
        let table = ERRORS.read().unwrap();
        ((index as usize) < table.names.len()).then_some(ErrorValue(index))
    }

    /// Every error registered so far.
    pub fn registered() -> Vec<ErrorValue> {
        let n = ERRORS.read().unwrap().names.len() as u32;
        (0..n).map(ErrorValue).collect()
    }

    pub fn index(self) -> u32 {
        self.0
    }

    pub fn name(self) -> Arc<str> {
        ERRORS.read().unwrap().names[self.0 as usize].clone()
    }
}

impl fmt::Display for ErrorValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl fmt::Debug for ErrorValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

// Error-NaN layout: sign 0, exponent all ones, quiet bit (51) set,
// bits 48..=50 = 0b101, bits 32..=47 zero, low 32 bits = error index.
const QUIET_NAN: u64 = 0x7FF8_0000_0000_0000;
pub const MAGIC_TAG: u64 = 0b101 << 48;
const SIGN_BIT: u64 = 1 << 63;
const HIGH_MASK: u64 = 0xFFFF_FFFF_0000_0000;
const ERROR_HIGH: u64 = QUIET_NAN | MAGIC_TAG;

/// Encodes an error as a tagged quiet NaN.
#[inline]
pub fn encode_error(e: ErrorValue) -> f64 {
    f64::from_bits(ERROR_HIGH | e.0 as u64)
}

/// Decodes a NaN back to an error. NaNs without the tag, or with an index
/// that was never registered, are `#NUM!`. The sign bit is ignored so that
/// negated error-NaNs keep their identity.
#[inline]
pub fn decode_nan(d: f64) -> ErrorValue {
    let bits = d.to_bits() & !SIGN_BIT;
    if bits & HIGH_MASK == ERROR_HIGH {
        ErrorValue::from_index(bits as u32).unwrap_or(ErrorValue::NUM)
    } else {
        ErrorValue::NUM
    }
}

/// True if `d` carries the error tag (ignoring the sign bit).
pub fn is_tagged_nan(d: f64) -> bool {
    (d.to_bits() & !SIGN_BIT) & HIGH_MASK == ERROR_HIGH
}

/// A rectangular grid of values, row-major, at least 1x1.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Array {
    rows: usize,
    cols: usize,
    cells: Vec<Value>,
}

impl Array {
    pub fn new(rows: usize, cols: usize, cells: Vec<Value>) -> Option<Array> {
        (rows >= 1 && cols >= 1 && cells.len() == rows * cols).then_some(Array { rows, cols, cells })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> &Value {
        &self.cells[row * self.cols + col]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Value> {
        self.cells.iter()
    }
}

/// A closure: a sheet-defined function plus captured arguments. `None`
/// marks a hole to be supplied at application time.
#[derive(Clone, Debug)]
pub struct FunctionValue {
    pub target: SdfId,
    /// Name of the target at closure creation, used for display only.
    pub name: Arc<str>,
    pub captured: Vec<Option<Value>>,
}

impl FunctionValue {
    pub fn arity(&self) -> usize {
        self.captured.iter().filter(|a| a.is_none()).count()
    }

    /// Fills the holes positionally with `args`. `args.len()` must equal
    /// the arity.
    pub fn merge_args(&self, args: &[Value]) -> Option<Vec<Value>> {
        if args.len() != self.arity() {
            return None;
        }
        let mut rest = args.iter();
        Some(
            self.captured
                .iter()
                .map(|c| match c {
                    Some(v) => v.clone(),
                    None => rest.next().unwrap().clone(),
                })
                .collect(),
        )
    }
}

impl PartialEq for FunctionValue {
    fn eq(&self, other: &Self) -> bool {
        self.target == other.target && self.captured == other.captured
    }
}

impl Eq for FunctionValue {}

impl Hash for FunctionValue {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.target.hash(state);
        self.captured.hash(state);
    }
}

impl fmt::Display for FunctionValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.name)?;
        for (i, arg) in self.captured.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            match arg {
                Some(v) => write!(f, "{}", v.literal())?,
                None => f.write_str("#NA")?,
            }
        }
        f.write_str(")")
    }
}

/// A tagged runtime value. Values are immutable; cloning is cheap.
#[derive(Clone, Debug)]
pub enum Value {
    Number(f64),
    Text(Arc<str>),
    Error(ErrorValue),
    Array(Arc<Array>),
    Function(Arc<FunctionValue>),
}

impl Value {
    pub const ZERO: Value = Value::Number(0.0);

    /// Boxes a double, turning NaNs into the errors they encode.
    #[inline]
    pub fn from_double_or_nan(d: f64) -> Value {
        if d.is_nan() {
            Value::Error(decode_nan(d))
        } else {
            Value::Number(d)
        }
    }

    /// Unboxes to a double; errors become error-NaNs and non-numeric values
    /// become `#VALUE!`.
    #[inline]
    pub fn to_double_or_nan(&self) -> f64 {
        match self {
            Value::Number(d) => *d,
            Value::Error(e) => encode_error(*e),
            _ => encode_error(ErrorValue::VALUE),
        }
    }

    pub fn text(s: &str) -> Value {
        Value::Text(Arc::from(s))
    }

    pub fn bool(b: bool) -> Value {
        Value::Number(if b { 1.0 } else { 0.0 })
    }

    pub fn as_error(&self) -> Option<ErrorValue> {
        match self {
            Value::Error(e) => Some(*e),
            _ => None,
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(d) => Some(*d),
            _ => None,
        }
    }

    pub fn as_function(&self) -> Option<&Arc<FunctionValue>> {
        match self {
            Value::Function(fv) => Some(fv),
            _ => None,
        }
    }

    pub fn is_error(&self) -> bool {
        matches!(self, Value::Error(_))
    }

    /// Renders the value as formula source: text is quoted.
    pub fn literal(&self) -> String {
        match self {
            Value::Text(s) => format!("\"{}\"", s.replace('"', "\"\"")),
            Value::Array(a) => {
                let mut out = String::from("{");
                for r in 0..a.rows() {
                    if r > 0 {
                        out.push(';');
                    }
                    for c in 0..a.cols() {
                        if c > 0 {
                            out.push(',');
                        }
                        out.push_str(&a.get(r, c).literal());
                    }
                }
                out.push('}');
                out
            }
            other => other.to_string(),
        }
    }
}

/// Formats a number as the shortest decimal that round-trips.
pub fn format_number(d: f64) -> String {
    if d.fract() == 0.0 && d.abs() < 1e15 {
        format!("{d}")
    } else {
        // Debug formatting switches to exponent notation for very large or
        // small magnitudes and is still shortest-round-trip.
        format!("{d:?}")
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(d) => f.write_str(&format_number(*d)),
            Value::Text(s) => f.write_str(s),
            Value::Error(e) => write!(f, "{e}"),
            Value::Array(_) => f.write_str(&self.literal()),
            Value::Function(fv) => write!(f, "{fv}"),
        }
    }
}

/// Structural equality. Numbers compare by bit pattern, so `0` and `-0`
/// are distinct; this is the comparator used for specialization keys.
pub fn value_equal(a: &Value, b: &Value) -> bool {
    a == b
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Number(a), Value::Number(b)) => a.to_bits() == b.to_bits(),
            (Value::Text(a), Value::Text(b)) => a == b,
            (Value::Error(a), Value::Error(b)) => a == b,
            (Value::Array(a), Value::Array(b)) => a == b,
            (Value::Function(a), Value::Function(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Value {}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        std::mem::discriminant(self).hash(state);
        match self {
            Value::Number(d) => d.to_bits().hash(state),
            Value::Text(s) => s.hash(state),
            Value::Error(e) => e.hash(state),
            Value::Array(a) => a.hash(state),
            Value::Function(fv) => fv.hash(state),
        }
    }
}
