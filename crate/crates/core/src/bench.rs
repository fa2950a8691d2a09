//! The BENCHMARK builtin.

use std::hint::black_box;
use std::time::Instant;

use crate::engine::Workbook;
use crate::values::{ErrorValue, FunctionValue, Value};

/// Calls made before timing starts.
pub const WARMUP_CALLS: u64 = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkResult {
    pub function: String,
    pub calls: u64,
    pub mean_ns: f64,
}

/// Times `count` calls of a 0-arity closure after a warm-up, on the
/// monotonic clock.
pub fn benchmark(wb: &Workbook, fv: &FunctionValue, count: u64) -> Result<BenchmarkResult, ErrorValue> {
    if fv.arity() != 0 || count < 1 {
        return Err(ErrorValue::VALUE);
    }
    wb.ensure_functions();
    let args = fv.merge_args(&[]).ok_or(ErrorValue::VALUE)?;
    for _ in 0..WARMUP_CALLS {
        black_box(wb.call_sdf(fv.target, black_box(&args), false));
    }
    let start = Instant::now();
    for _ in 0..count {
        black_box(wb.call_sdf(fv.target, black_box(&args), false));
    }
    let elapsed = start.elapsed();
    Ok(BenchmarkResult {
        function: fv.to_string(),
        calls: count,
        mean_ns: elapsed.as_nanos() as f64 / count as f64,
    })
}

/// `BENCHMARK(fv, count)`: mean nanoseconds per call.
pub fn benchmark_value(wb: &Workbook, f: &Value, count: &Value) -> Value {
    let n = match count {
        Value::Number(d) if *d >= 1.0 && d.is_finite() => d.trunc() as u64,
        Value::Error(e) => return Value::Error(*e),
        _ => return Value::Error(ErrorValue::VALUE),
    };
    match f {
        Value::Function(fv) => match benchmark(wb, fv, n) {
            Ok(r) => Value::Number(r.mean_ns),
            Err(e) => Value::Error(e),
        },
        Value::Error(e) => Value::Error(*e),
        _ => Value::Error(ErrorValue::VALUE),
    }
}
