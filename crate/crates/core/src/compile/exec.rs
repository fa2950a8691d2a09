//! The IR executor.

use std::sync::{Arc, LazyLock};

use smallvec::SmallVec;

use super::{CompiledFunction, Instr, Operand};
use crate::engine::kernels::{self, text_of};
use crate::engine::{Special, Workbook};
use crate::sdf::{make_closure, SdfId, SdfInfo};
use crate::values::{decode_nan, encode_error, format_number, ErrorValue, Value};

static POISON: LazyLock<ErrorValue> = LazyLock::new(|| ErrorValue::intern("#POISON!"));

/// The value registers hold before they are written. Reading it means the
/// compiler scheduled a use before its definition.
pub fn poison() -> ErrorValue {
    *POISON
}

enum Flow {
    Return(Value),
    Tail(SdfId, Args),
    EndThunk,
}

type Args = SmallVec<[Value; 8]>;

/// Register slices of one activation.
struct Frame<'a> {
    v: &'a mut [Value],
    f: &'a mut [f64],
    m: &'a mut [bool],
}

/// Runs a compiled function; tail calls reuse this loop instead of the
/// native stack. Arity has been checked by the caller.
pub(crate) fn invoke(wb: &Workbook, info: Arc<SdfInfo>, args: &[Value]) -> Value {
    let mut info = info;
    let mut tail_args: Args;
    let mut args = args;
    loop {
        wb.stats.calls.set(wb.stats.calls.get() + 1);
        let func = &info.compiled;
        let p = poison();
        let n = func.v_regs.max(args.len());
        let mut v: SmallVec<[Value; 8]> = SmallVec::with_capacity(n);
        v.extend(args.iter().cloned());
        v.resize(n, Value::Error(p));
        let mut f: SmallVec<[f64; 16]> = SmallVec::from_elem(encode_error(p), func.f_regs);
        let mut m: SmallVec<[bool; 8]> = SmallVec::from_elem(false, func.memos);
        let mut frame = Frame {
            v: &mut v,
            f: &mut f,
            m: &mut m,
        };
        match run(wb, func, &mut frame, 0) {
            Flow::Return(v) => return v,
            Flow::Tail(id, next_args) => {
                let Some(next) = wb.function(id) else {
                    return Value::Error(ErrorValue::NAME);
                };
                if next_args.len() != next.arity() {
                    return Value::Error(ErrorValue::VALUE);
                }
                info = next;
                tail_args = next_args;
                args = &tail_args;
            }
            Flow::EndThunk => return Value::Error(poison()),
        }
    }
}

fn gather(r: &Frame, args: &[u16]) -> Args {
    args.iter().map(|a| r.v[*a as usize].clone()).collect()
}

fn run(wb: &Workbook, func: &CompiledFunction, r: &mut Frame, start: usize) -> Flow {
    let code = &func.code;
    let scratch = func.scratch as usize;
    let mut pc = start;
    macro_rules! goto {
        ($t:expr) => {{
            pc = $t as usize;
            continue;
        }};
    }
    loop {
        match &code[pc] {
            Instr::Const { dst, value } => r.f[*dst as usize] = *value,
            Instr::ConstV { dst, value } => r.v[*dst as usize] = value.clone(),
            Instr::Unwrap { dst, src } => r.f[*dst as usize] = r.v[*src as usize].to_double_or_nan(),
            Instr::Box { dst, src } => {
                wb.stats.boxes.set(wb.stats.boxes.get() + 1);
                r.v[*dst as usize] = Value::from_double_or_nan(r.f[*src as usize]);
            }
            Instr::Arith { op, dst, a, b } => {
                r.f[*dst as usize] = kernels::arith(*op, r.f[*a as usize], r.f[*b as usize]);
            }
            Instr::Neg { dst, src } => r.f[*dst as usize] = -r.f[*src as usize],
            Instr::Not { dst, src } => r.f[*dst as usize] = kernels::not(r.f[*src as usize]),
            Instr::Math1 { f, dst, src } => r.f[*dst as usize] = f.apply(r.f[*src as usize]),
            Instr::Math2 { f, dst, a, b } => r.f[*dst as usize] = f.apply(r.f[*a as usize], r.f[*b as usize]),
            Instr::Rand { dst } => r.f[*dst as usize] = wb.random(),
            Instr::Now { dst } => {
                r.f[*dst as usize] = wb.num0(crate::engine::Num0::Now).to_double_or_nan();
            }
            Instr::Cmp { op, dst, a, b } => {
                r.f[*dst as usize] = kernels::compare_num(*op, r.f[*a as usize], r.f[*b as usize]);
            }
            Instr::CmpV { op, dst, a, b } => {
                r.v[*dst as usize] = kernels::compare_values(*op, &r.v[*a as usize], &r.v[*b as usize]);
            }
            Instr::Concat { dst, parts } => {
                let mut out = String::new();
                let mut err = None;
                for p in parts {
                    let bad = match p {
                        Operand::V(x) => match &r.v[*x as usize] {
                            Value::Text(s) => {
                                out.push_str(s);
                                None
                            }
                            other => match text_of(other) {
                                Ok(s) => {
                                    out.push_str(&s);
                                    None
                                }
                                Err(e) => Some(e),
                            },
                        },
                        Operand::F(x) => {
                            let d = r.f[*x as usize];
                            if d.is_nan() {
                                Some(decode_nan(d))
                            } else {
                                out.push_str(&format_number(d));
                                None
                            }
                        }
                    };
                    if bad.is_some() {
                        err = bad;
                        break;
                    }
                }
                r.v[*dst as usize] = match err {
                    Some(e) => Value::Error(e),
                    None => Value::Text(Arc::from(out)),
                };
            }
            Instr::Builtin { b, dst, args } => {
                let vals = gather(r, args);
                r.v[*dst as usize] = b.apply_generic(&vals);
            }
            Instr::Special { which, dst, args } => {
                let vals = gather(r, args);
                r.v[*dst as usize] = match which {
                    Special::Specialize => crate::peval::specialize_value(wb, &vals[0]),
                    Special::Benchmark => crate::bench::benchmark_value(wb, &vals[0], &vals[1]),
                    _ => Value::Error(ErrorValue::VALUE),
                };
            }
            Instr::Call { target, dst, args, .. } => {
                let vals = gather(r, args);
                r.v[*dst as usize] = wb.call_sdf(*target, &vals, false);
            }
            Instr::CallNamed { name, dst, args } => {
                let vals = gather(r, args);
                r.v[*dst as usize] = match wb.function_id(name) {
                    Some(id) => wb.call_sdf(id, &vals, false),
                    None => Value::Error(ErrorValue::NAME),
                };
            }
            Instr::Apply { dst, f, args } => {
                let vals = gather(r, args);
                r.v[*dst as usize] = wb.apply_value(&r.v[*f as usize], &vals, false);
            }
            Instr::Closure { dst, args } => {
                let vals = gather(r, args);
                r.v[*dst as usize] = make_closure(wb, &vals[0], &vals[1..]);
            }
            Instr::TailCall { target, args, .. } => return Flow::Tail(*target, gather(r, args)),
            Instr::TailApply { f, args } => {
                let vals = gather(r, args);
                return match &r.v[*f as usize] {
                    Value::Function(fv) => match fv.merge_args(&vals) {
                        Some(all) => Flow::Tail(fv.target, all.into()),
                        None => Flow::Return(Value::Error(ErrorValue::VALUE)),
                    },
                    Value::Error(e) => Flow::Return(Value::Error(*e)),
                    _ => Flow::Return(Value::Error(ErrorValue::VALUE)),
                };
            }
            Instr::ReadCell { dst, addr } => r.v[*dst as usize] = wb.read_cell(addr, None),
            Instr::ReadArea { dst, a, b } => r.v[*dst as usize] = wb.read_area(a, b, None),
            Instr::Jump { target } => goto!(*target),
            Instr::BrNan { src, target } => {
                let d = r.f[*src as usize];
                if d.is_nan() {
                    r.v[scratch] = Value::Error(decode_nan(d));
                    goto!(*target);
                }
            }
            Instr::BrErr { src, target } => {
                if let Value::Error(e) = r.v[*src as usize] {
                    r.v[scratch] = Value::Error(e);
                    goto!(*target);
                }
            }
            Instr::BrCond { src, t, f, bad } => {
                let d = r.f[*src as usize];
                if d.is_nan() {
                    r.v[scratch] = Value::Error(decode_nan(d));
                    goto!(*bad);
                }
                goto!(if d != 0.0 { *t } else { *f });
            }
            Instr::BrCondV { src, t, f, bad } => match kernels::truth(&r.v[*src as usize]) {
                Ok(true) => goto!(*t),
                Ok(false) => goto!(*f),
                Err(e) => {
                    r.v[scratch] = Value::Error(e);
                    goto!(*bad);
                }
            },
            Instr::BrCmp { op, a, b, t, f } => {
                goto!(if op.test(&r.f[*a as usize], &r.f[*b as usize]) {
                    *t
                } else {
                    *f
                });
            }
            Instr::BrCmpV { op, a, b, t, f, bad } => {
                match kernels::compare_values(*op, &r.v[*a as usize], &r.v[*b as usize]) {
                    Value::Number(d) => goto!(if d != 0.0 { *t } else { *f }),
                    other => {
                        r.v[scratch] = other;
                        goto!(*bad);
                    }
                }
            }
            Instr::Switch {
                src,
                targets,
                bad,
                out_of_range,
            } => {
                let d = r.f[*src as usize];
                if d.is_nan() {
                    r.v[scratch] = Value::Error(decode_nan(d));
                    goto!(*bad);
                }
                match kernels::choose_index(d, targets.len()) {
                    Some(i) => goto!(targets[i]),
                    None => goto!(*out_of_range),
                }
            }
            Instr::Scratch { value } => r.v[scratch] = value.clone(),
            Instr::Memo { flag, target } => {
                if r.m[*flag as usize] {
                    goto!(*target);
                }
            }
            Instr::MemoSet { flag } => r.m[*flag as usize] = true,
            Instr::Force { flag, thunk } => {
                if !r.m[*flag as usize] {
                    match run(wb, func, r, *thunk as usize) {
                        Flow::EndThunk => {}
                        // Thunks contain no returns or tail calls.
                        other => return other,
                    }
                }
            }
            Instr::EndThunk => return Flow::EndThunk,
            Instr::Return { src } => return Flow::Return(std::mem::replace(&mut r.v[*src as usize], Value::ZERO)),
            Instr::Move { dst, src } => r.v[*dst as usize] = r.v[*src as usize].clone(),
            Instr::FMove { dst, src } => r.f[*dst as usize] = r.f[*src as usize],
        }
        pc += 1;
    }
}
