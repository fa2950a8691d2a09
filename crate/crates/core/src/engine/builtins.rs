//! The builtin-function registry.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use super::kernels::{concat_values, Math1, Math2};
use crate::values::{ErrorValue, Value};

/// Applier for a generic builtin. It receives already evaluated arguments.
pub type Applier = Arc<dyn Fn(&[Value]) -> Value + Send + Sync>;

/// Nullary numeric builtins.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Num0 {
    Rand,
    Now,
    True,
    False,
    Na,
}

/// Forms that need access to evaluation context or control unevaluated
/// arguments. The parser turns IF, CHOOSE, AND, OR, NOT, CLOSURE and APPLY
/// into dedicated nodes; they are registered here so that the names are
/// reserved.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Special {
    If,
    Choose,
    And,
    Or,
    Not,
    Closure,
    Apply,
    Define,
    Specialize,
    Benchmark,
}

#[derive(Clone)]
pub enum BuiltinKind {
    Num0(Num0),
    Num1(Math1),
    Num2(Math2),
    Generic {
        /// When set, an error argument is returned without calling the
        /// applier (the leftmost one if there are several).
        strict: bool,
        /// The result is always a number or an error.
        numeric: bool,
        apply: Applier,
    },
    Special(Special),
}

#[derive(Clone)]
pub struct Builtin {
    pub name: Arc<str>,
    pub min_args: usize,
    pub max_args: Option<usize>,
    pub volatile: bool,
    pub kind: BuiltinKind,
}

impl fmt::Debug for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Builtin({})", self.name)
    }
}

impl Builtin {
    /// A user-defined builtin over evaluated arguments.
    pub fn generic(
        name: &str,
        min_args: usize,
        max_args: Option<usize>,
        strict: bool,
        apply: impl Fn(&[Value]) -> Value + Send + Sync + 'static,
    ) -> Builtin {
        Builtin {
            name: Arc::from(name.to_ascii_uppercase().as_str()),
            min_args,
            max_args,
            volatile: false,
            kind: BuiltinKind::Generic {
                strict,
                numeric: false,
                apply: Arc::new(apply),
            },
        }
    }

    pub fn volatile(mut self) -> Builtin {
        self.volatile = true;
        self
    }

    pub fn accepts(&self, n: usize) -> bool {
        n >= self.min_args && self.max_args.is_none_or(|m| n <= m)
    }

    /// True if the result is always a number or an error.
    pub fn is_numeric(&self) -> bool {
        match &self.kind {
            BuiltinKind::Num0(_) | BuiltinKind::Num1(_) | BuiltinKind::Num2(_) => true,
            BuiltinKind::Generic { numeric, .. } => *numeric,
            BuiltinKind::Special(Special::Not | Special::And | Special::Or) => true,
            BuiltinKind::Special(_) => false,
        }
    }

    /// Applies a generic builtin to evaluated arguments.
    pub fn apply_generic(&self, args: &[Value]) -> Value {
        match &self.kind {
            BuiltinKind::Generic { strict, apply, .. } => {
                if *strict {
                    if let Some(e) = args.iter().find_map(Value::as_error) {
                        return Value::Error(e);
                    }
                }
                apply(args)
            }
            BuiltinKind::Num1(m) => Value::from_double_or_nan(m.apply(args[0].to_double_or_nan())),
            BuiltinKind::Num2(m) => Value::from_double_or_nan(
                m.apply(args[0].to_double_or_nan(), args[1].to_double_or_nan()),
            ),
            _ => Value::Error(ErrorValue::VALUE),
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("builtin {0} is already registered")]
pub struct DuplicateBuiltin(pub String);

#[derive(Clone, Debug)]
pub struct Builtins {
    map: HashMap<String, Arc<Builtin>>,
}

impl Builtins {
    pub fn empty() -> Builtins {
        Builtins {
            map: HashMap::new(),
        }
    }

    pub fn register(&mut self, b: Builtin) -> Result<(), DuplicateBuiltin> {
        let key = b.name.to_ascii_uppercase();
        if self.map.contains_key(&key) {
            return Err(DuplicateBuiltin(key));
        }
        self.map.insert(key, Arc::new(b));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Arc<Builtin>> {
        self.map
            .get(name)
            .or_else(|| self.map.get(&name.to_ascii_uppercase()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(|k| k.as_str())
    }

    /// The standard library.
    pub fn standard() -> Builtins {
        let mut r = Builtins::empty();
        let mut add = |name: &str, min: usize, max: Option<usize>, volatile: bool, kind| {
            r.register(Builtin {
                name: Arc::from(name),
                min_args: min,
                max_args: max,
                volatile,
                kind,
            })
            .expect("standard builtins are distinct");
        };
        for (name, f, volatile) in [
            ("RAND", Num0::Rand, true),
            ("NOW", Num0::Now, true),
            ("TRUE", Num0::True, false),
            ("FALSE", Num0::False, false),
            ("NA", Num0::Na, false),
        ] {
            add(name, 0, Some(0), volatile, BuiltinKind::Num0(f));
        }
        for m in [Math1::Sqrt, Math1::Exp, Math1::Ln, Math1::Abs, Math1::Trunc] {
            add(m.name(), 1, Some(1), false, BuiltinKind::Num1(m));
        }
        for m in [Math2::Mod, Math2::Quotient, Math2::Floor] {
            add(m.name(), 2, Some(2), false, BuiltinKind::Num2(m));
        }
        let generic = |strict, numeric, f: fn(&[Value]) -> Value| BuiltinKind::Generic {
            strict,
            numeric,
            apply: Arc::new(f),
        };
        add("SUM", 0, None, false, generic(true, true, sum));
        add("MIN", 0, None, false, generic(true, true, min));
        add("MAX", 0, None, false, generic(true, true, max));
        add("CONCAT", 0, None, false, generic(true, false, concat));
        add("ERR", 1, Some(1), false, generic(true, true, err));
        add("ISERROR", 1, Some(1), false, generic(false, true, iserror));
        add("ISTRUE", 1, Some(1), false, generic(false, true, istrue));
        add("ISFALSE", 1, Some(1), false, generic(false, true, isfalse));
        for (name, s, min, max) in [
            ("IF", Special::If, 3, Some(3)),
            ("CHOOSE", Special::Choose, 2, None),
            ("AND", Special::And, 0, None),
            ("OR", Special::Or, 0, None),
            ("NOT", Special::Not, 1, Some(1)),
            ("CLOSURE", Special::Closure, 1, None),
            ("APPLY", Special::Apply, 1, None),
            ("DEFINE", Special::Define, 2, None),
            ("SPECIALIZE", Special::Specialize, 1, Some(1)),
            ("BENCHMARK", Special::Benchmark, 2, Some(2)),
        ] {
            add(name, min, max, false, BuiltinKind::Special(s));
        }
        r
    }
}

// Numbers inside arrays; text and other values inside arrays are skipped,
// errors propagate.
fn numbers(args: &[Value], mut f: impl FnMut(f64)) -> Result<(), ErrorValue> {
    for a in args {
        match a {
            Value::Number(d) => f(*d),
            Value::Array(arr) => {
                for v in arr.iter() {
                    match v {
                        Value::Number(d) => f(*d),
                        Value::Error(e) => return Err(*e),
                        _ => {}
                    }
                }
            }
            Value::Error(e) => return Err(*e),
            _ => return Err(ErrorValue::VALUE),
        }
    }
    Ok(())
}

fn sum(args: &[Value]) -> Value {
    let mut total = 0.0;
    match numbers(args, |d| total += d) {
        Ok(()) => Value::from_double_or_nan(total),
        Err(e) => Value::Error(e),
    }
}

fn min(args: &[Value]) -> Value {
    let mut m = f64::INFINITY;
    match numbers(args, |d| m = m.min(d)) {
        Ok(()) if m == f64::INFINITY => Value::ZERO,
        Ok(()) => Value::Number(m),
        Err(e) => Value::Error(e),
    }
}

fn max(args: &[Value]) -> Value {
    let mut m = f64::NEG_INFINITY;
    match numbers(args, |d| m = m.max(d)) {
        Ok(()) if m == f64::NEG_INFINITY => Value::ZERO,
        Ok(()) => Value::Number(m),
        Err(e) => Value::Error(e),
    }
}

fn concat(args: &[Value]) -> Value {
    concat_values(&args.iter().collect::<Vec<_>>())
}

fn err(args: &[Value]) -> Value {
    match &args[0] {
        Value::Text(msg) => Value::Error(ErrorValue::user(msg)),
        other => Value::Error(ErrorValue::user(&other.to_string())),
    }
}

fn iserror(args: &[Value]) -> Value {
    Value::bool(args[0].is_error())
}

fn istrue(args: &[Value]) -> Value {
    Value::bool(matches!(args[0], Value::Number(d) if d != 0.0))
}

fn isfalse(args: &[Value]) -> Value {
    Value::bool(matches!(args[0], Value::Number(d) if d == 0.0))
}
