//! Numeric and value-level primitive operations.
//!
//! Both the interpreter and the compiled code path call into these, as does
//! constant folding during specialization, so the three always agree.

use std::borrow::Cow;
use std::sync::Arc;

use crate::formula::{BinaryOp, CmpOp};
use crate::values::{encode_error, format_number, ErrorValue, Value};

#[inline]
fn nan_result(a: f64, b: f64, r: f64) -> f64 {
    if !r.is_nan() {
        r
    } else if a.is_nan() {
        a
    } else if b.is_nan() {
        b
    } else {
        r
    }
}

// When both operands are error-NaNs the left one wins, so every path
// reports the same error.
#[inline]
pub fn add(a: f64, b: f64) -> f64 {
    nan_result(a, b, a + b)
}

#[inline]
pub fn sub(a: f64, b: f64) -> f64 {
    nan_result(a, b, a - b)
}

#[inline]
pub fn mul(a: f64, b: f64) -> f64 {
    nan_result(a, b, a * b)
}

#[inline]
pub fn div(a: f64, b: f64) -> f64 {
    if b == 0.0 && !a.is_nan() {
        return encode_error(ErrorValue::DIV0);
    }
    nan_result(a, b, a / b)
}

#[inline]
pub fn pow(a: f64, b: f64) -> f64 {
    nan_result(a, b, a.powf(b))
}

#[inline]
pub fn arith(op: BinaryOp, a: f64, b: f64) -> f64 {
    match op {
        BinaryOp::Add => add(a, b),
        BinaryOp::Sub => sub(a, b),
        BinaryOp::Mul => mul(a, b),
        BinaryOp::Div => div(a, b),
        BinaryOp::Pow => pow(a, b),
        BinaryOp::Concat => encode_error(ErrorValue::VALUE),
    }
}

#[inline]
pub fn not(d: f64) -> f64 {
    if d.is_nan() {
        d
    } else if d == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Numeric comparison giving 1 or 0, or the first error-NaN operand.
#[inline]
pub fn compare_num(op: CmpOp, a: f64, b: f64) -> f64 {
    if a.is_nan() {
        a
    } else if b.is_nan() {
        b
    } else if op.test(&a, &b) {
        1.0
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Math1 {
    Sqrt,
    Exp,
    Ln,
    Abs,
    Trunc,
}

impl Math1 {
    pub fn name(self) -> &'static str {
        match self {
            Math1::Sqrt => "SQRT",
            Math1::Exp => "EXP",
            Math1::Ln => "LN",
            Math1::Abs => "ABS",
            Math1::Trunc => "TRUNC",
        }
    }

    #[inline]
    pub fn apply(self, d: f64) -> f64 {
        if d.is_nan() {
            return d;
        }
        match self {
            Math1::Sqrt => d.sqrt(),
            Math1::Exp => d.exp(),
            Math1::Ln if d <= 0.0 => encode_error(ErrorValue::NUM),
            Math1::Ln => d.ln(),
            Math1::Abs => d.abs(),
            Math1::Trunc => d.trunc(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Math2 {
    Mod,
    Quotient,
    Floor,
}

impl Math2 {
    pub fn name(self) -> &'static str {
        match self {
            Math2::Mod => "MOD",
            Math2::Quotient => "QUOTIENT",
            Math2::Floor => "FLOOR",
        }
    }

    #[inline]
    pub fn apply(self, a: f64, b: f64) -> f64 {
        if a.is_nan() {
            return a;
        }
        if b.is_nan() {
            return b;
        }
        if b == 0.0 {
            return encode_error(ErrorValue::DIV0);
        }
        let r = match self {
            // Result takes the sign of the divisor.
            Math2::Mod => a - b * (a / b).floor(),
            Math2::Quotient => (a / b).trunc(),
            Math2::Floor => (a / b).floor() * b,
        };
        nan_result(a, b, r)
    }
}

/// Converts a value to text for concatenation.
pub fn text_of(v: &Value) -> Result<Cow<'_, str>, ErrorValue> {
    match v {
        Value::Text(s) => Ok(Cow::Borrowed(s)),
        Value::Number(d) => Ok(Cow::Owned(format_number(*d))),
        Value::Error(e) => Err(*e),
        Value::Array(_) | Value::Function(_) => Err(ErrorValue::VALUE),
    }
}

/// Concatenates values left to right; the first error wins.
pub fn concat_values(parts: &[&Value]) -> Value {
    let mut out = String::new();
    for p in parts {
        match text_of(p) {
            Ok(s) => out.push_str(&s),
            Err(e) => return Value::Error(e),
        }
    }
    Value::Text(Arc::from(out))
}

/// Interprets a value as a condition.
#[inline]
pub fn truth(v: &Value) -> Result<bool, ErrorValue> {
    match v {
        Value::Number(d) => Ok(*d != 0.0),
        Value::Error(e) => Err(*e),
        _ => Err(ErrorValue::VALUE),
    }
}

/// Compares two non-error values. Numbers compare numerically and texts
/// lexicographically; any other combination is `#VALUE!`.
pub fn compare_proper(op: CmpOp, a: &Value, b: &Value) -> Value {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => Value::bool(op.test(x, y)),
        (Value::Text(x), Value::Text(y)) => Value::bool(op.test(&**x, &**y)),
        _ => Value::Error(ErrorValue::VALUE),
    }
}

/// Compares two values, propagating the left error first.
pub fn compare_values(op: CmpOp, a: &Value, b: &Value) -> Value {
    if let Value::Error(e) = a {
        return Value::Error(*e);
    }
    if let Value::Error(e) = b {
        return Value::Error(*e);
    }
    compare_proper(op, a, b)
}

pub fn binary_values(op: BinaryOp, a: &Value, b: &Value) -> Value {
    match op {
        BinaryOp::Concat => concat_values(&[a, b]),
        _ => Value::from_double_or_nan(arith(op, a.to_double_or_nan(), b.to_double_or_nan())),
    }
}

/// Index selected by a CHOOSE selector, or `None` when out of range.
#[inline]
pub fn choose_index(sel: f64, n: usize) -> Option<usize> {
    let i = sel.trunc();
    (i >= 1.0 && i <= n as f64).then(|| i as usize - 1)
}
