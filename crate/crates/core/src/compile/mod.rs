//! Compilation of function bodies to a register IR, and its executor.
//!
//! Each function runs in a frame with two register files: `v` registers
//! hold boxed values and `f` registers hold naked doubles, where errors are
//! error-NaNs. Arguments arrive in `v0..vN`. The IR format is documented in
//! `docs/ir.md`.

mod compiler;
pub mod exec;

use std::fmt::Write as _;
use std::sync::Arc;

use crate::engine::kernels::{Math1, Math2};
use crate::engine::{Builtin, Special};
use crate::formula::{render_number, BinaryOp, CellAddr, CmpOp};
use crate::sdf::SdfId;
use crate::values::{decode_nan, Value};

pub use compiler::compile;

pub type Reg = u16;
/// An instruction index.
pub type Pc = u32;

/// A concatenation operand.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Operand {
    V(Reg),
    F(Reg),
}

#[derive(Clone, Debug)]
pub enum Instr {
    Const { dst: Reg, value: f64 },
    ConstV { dst: Reg, value: Value },
    Unwrap { dst: Reg, src: Reg },
    Box { dst: Reg, src: Reg },
    Arith { op: BinaryOp, dst: Reg, a: Reg, b: Reg },
    Neg { dst: Reg, src: Reg },
    Not { dst: Reg, src: Reg },
    Math1 { f: Math1, dst: Reg, src: Reg },
    Math2 { f: Math2, dst: Reg, a: Reg, b: Reg },
    Rand { dst: Reg },
    Now { dst: Reg },
    /// Numeric comparison giving 1, 0 or the first error operand.
    Cmp { op: CmpOp, dst: Reg, a: Reg, b: Reg },
    /// Comparison of boxed values.
    CmpV { op: CmpOp, dst: Reg, a: Reg, b: Reg },
    Concat { dst: Reg, parts: Vec<Operand> },
    Builtin { b: Arc<Builtin>, dst: Reg, args: Vec<Reg> },
    Special { which: Special, dst: Reg, args: Vec<Reg> },
    Call { target: SdfId, name: Arc<str>, dst: Reg, args: Vec<Reg> },
    CallNamed { name: Arc<str>, dst: Reg, args: Vec<Reg> },
    Apply { dst: Reg, f: Reg, args: Vec<Reg> },
    Closure { dst: Reg, args: Vec<Reg> },
    TailCall { target: SdfId, name: Arc<str>, args: Vec<Reg> },
    TailApply { f: Reg, args: Vec<Reg> },
    ReadCell { dst: Reg, addr: CellAddr },
    ReadArea { dst: Reg, a: CellAddr, b: CellAddr },
    Jump { target: Pc },
    /// Jumps if the f register is a NaN, leaving the error in the scratch
    /// register.
    BrNan { src: Reg, target: Pc },
    /// Jumps if the v register holds an error, copying it to scratch.
    BrErr { src: Reg, target: Pc },
    /// Three-way branch on a double: non-zero, zero, NaN.
    BrCond { src: Reg, t: Pc, f: Pc, bad: Pc },
    /// Three-way branch on a value: non-zero number, zero, anything else.
    BrCondV { src: Reg, t: Pc, f: Pc, bad: Pc },
    /// Comparison of two proper doubles.
    BrCmp { op: CmpOp, a: Reg, b: Reg, t: Pc, f: Pc },
    /// Comparison of two values; an error operand (left first) or mixed
    /// types go to `bad`.
    BrCmpV { op: CmpOp, a: Reg, b: Reg, t: Pc, f: Pc, bad: Pc },
    /// CHOOSE dispatch on a double.
    Switch { src: Reg, targets: Vec<Pc>, bad: Pc, out_of_range: Pc },
    /// Puts a constant error in the scratch register.
    Scratch { value: Value },
    /// Jumps if the memo flag is set.
    Memo { flag: Reg, target: Pc },
    MemoSet { flag: Reg },
    /// Runs the thunk at `thunk` unless the memo flag is set.
    Force { flag: Reg, thunk: Pc },
    EndThunk,
    Return { src: Reg },
    Move { dst: Reg, src: Reg },
    FMove { dst: Reg, src: Reg },
}

impl Instr {
    pub fn mnemonic(&self) -> &'static str {
        match self {
            Instr::Const { .. } => "const",
            Instr::ConstV { .. } => "constv",
            Instr::Unwrap { .. } => "unwrap",
            Instr::Box { .. } => "box",
            Instr::Arith { op, .. } => match op {
                BinaryOp::Add => "add",
                BinaryOp::Sub => "sub",
                BinaryOp::Mul => "mul",
                BinaryOp::Div => "div",
                BinaryOp::Pow => "pow",
                BinaryOp::Concat => "concat",
            },
            Instr::Neg { .. } => "neg",
            Instr::Not { .. } => "not",
            Instr::Math1 { .. } | Instr::Math2 { .. } | Instr::Rand { .. } | Instr::Now { .. } => "math",
            Instr::Cmp { .. } => "cmp",
            Instr::CmpV { .. } => "cmpv",
            Instr::Concat { .. } => "concat",
            Instr::Builtin { .. } | Instr::Special { .. } => "builtin",
            Instr::Call { .. } => "call",
            Instr::CallNamed { .. } => "callnamed",
            Instr::Apply { .. } => "apply",
            Instr::Closure { .. } => "closure",
            Instr::TailCall { .. } => "tailcall",
            Instr::TailApply { .. } => "tailapply",
            Instr::ReadCell { .. } => "readcell",
            Instr::ReadArea { .. } => "readarea",
            Instr::Jump { .. } => "jump",
            Instr::BrNan { .. } => "brnan",
            Instr::BrErr { .. } => "brerr",
            Instr::BrCond { .. } => "brcond",
            Instr::BrCondV { .. } => "brcondv",
            Instr::BrCmp { .. } | Instr::BrCmpV { .. } => "brcmp",
            Instr::Switch { .. } => "switch",
            Instr::Scratch { .. } => "scratch",
            Instr::Memo { .. } => "memo",
            Instr::MemoSet { .. } => "memoset",
            Instr::Force { .. } => "force",
            Instr::EndThunk => "endthunk",
            Instr::Return { .. } => "return",
            Instr::Move { .. } => "move",
            Instr::FMove { .. } => "fmove",
        }
    }

    /// Immediate operands: constants, operator symbols and names.
    pub fn immediate(&self) -> Option<String> {
        Some(match self {
            Instr::Const { value, .. } => fmt_double(*value),
            Instr::ConstV { value, .. } | Instr::Scratch { value } => value.literal(),
            Instr::Math1 { f, .. } => f.name().to_string(),
            Instr::Math2 { f, .. } => f.name().to_string(),
            Instr::Rand { .. } => "RAND".to_string(),
            Instr::Now { .. } => "NOW".to_string(),
            Instr::Cmp { op, .. }
            | Instr::CmpV { op, .. }
            | Instr::BrCmp { op, .. }
            | Instr::BrCmpV { op, .. } => op.symbol().to_string(),
            Instr::Builtin { b, .. } => b.name.to_string(),
            Instr::Special { which, .. } => format!("{which:?}").to_ascii_uppercase(),
            Instr::Call { name, .. } | Instr::TailCall { name, .. } | Instr::CallNamed { name, .. } => {
                name.to_string()
            }
            Instr::ReadCell { addr, .. } => addr.to_string(),
            Instr::ReadArea { a, b, .. } => format!("{a}:{}", b.pos),
            _ => return None,
        })
    }

    fn targets(&self) -> Vec<Pc> {
        match self {
            Instr::Jump { target }
            | Instr::BrNan { target, .. }
            | Instr::BrErr { target, .. }
            | Instr::Memo { target, .. } => vec![*target],
            Instr::Force { thunk, .. } => vec![*thunk],
            Instr::BrCond { t, f, bad, .. } | Instr::BrCondV { t, f, bad, .. } | Instr::BrCmpV { t, f, bad, .. } => {
                vec![*t, *f, *bad]
            }
            Instr::BrCmp { t, f, .. } => vec![*t, *f],
            Instr::Switch {
                targets,
                bad,
                out_of_range,
                ..
            } => {
                let mut v = targets.clone();
                v.push(*bad);
                v.push(*out_of_range);
                v
            }
            _ => Vec::new(),
        }
    }

    fn operands(&self) -> String {
        let v = |r: &Reg| format!("v{r}");
        let f = |r: &Reg| format!("f{r}");
        let list = |rs: &[Reg]| rs.iter().map(v).collect::<Vec<_>>().join(", ");
        let l = |p: &Pc| format!("L{p}");
        match self {
            Instr::Const { dst, .. } | Instr::Rand { dst } | Instr::Now { dst } => f(dst),
            Instr::ConstV { dst, .. } => v(dst),
            Instr::Unwrap { dst, src } => format!("{} <- {}", f(dst), v(src)),
            Instr::Box { dst, src } => format!("{} <- {}", v(dst), f(src)),
            Instr::Arith { dst, a, b, .. } | Instr::Math2 { dst, a, b, .. } | Instr::Cmp { dst, a, b, .. } => {
                format!("{} <- {}, {}", f(dst), f(a), f(b))
            }
            Instr::Neg { dst, src } | Instr::Not { dst, src } | Instr::Math1 { dst, src, .. } => {
                format!("{} <- {}", f(dst), f(src))
            }
            Instr::FMove { dst, src } => format!("{} <- {}", f(dst), f(src)),
            Instr::CmpV { dst, a, b, .. } => format!("{} <- {}, {}", v(dst), v(a), v(b)),
            Instr::Concat { dst, parts } => {
                let ps: Vec<String> = parts
                    .iter()
                    .map(|p| match p {
                        Operand::V(r) => v(r),
                        Operand::F(r) => f(r),
                    })
                    .collect();
                format!("{} <- {}", v(dst), ps.join(", "))
            }
            Instr::Builtin { dst, args, .. }
            | Instr::Special { dst, args, .. }
            | Instr::Call { dst, args, .. }
            | Instr::CallNamed { dst, args, .. }
            | Instr::Closure { dst, args } => format!("{} <- ({})", v(dst), list(args)),
            Instr::Apply { dst, f: fr, args } => format!("{} <- {} ({})", v(dst), v(fr), list(args)),
            Instr::TailCall { args, .. } => format!("({})", list(args)),
            Instr::TailApply { f: fr, args } => format!("{} ({})", v(fr), list(args)),
            Instr::ReadCell { dst, .. } | Instr::ReadArea { dst, .. } => v(dst),
            Instr::Jump { target } => l(target),
            Instr::BrNan { src, target } => format!("{}, {}", f(src), l(target)),
            Instr::BrErr { src, target } => format!("{}, {}", v(src), l(target)),
            Instr::BrCond { src, t, f: ff, bad } => format!("{}, {}, {}, {}", f(src), l(t), l(ff), l(bad)),
            Instr::BrCondV { src, t, f: ff, bad } => format!("{}, {}, {}, {}", v(src), l(t), l(ff), l(bad)),
            Instr::BrCmp { a, b, t, f: ff, .. } => format!("{}, {}, {}, {}", f(a), f(b), l(t), l(ff)),
            Instr::BrCmpV { a, b, t, f: ff, bad, .. } => {
                format!("{}, {}, {}, {}, {}", v(a), v(b), l(t), l(ff), l(bad))
            }
            Instr::Switch {
                src,
                targets,
                bad,
                out_of_range,
            } => {
                let ts: Vec<String> = targets.iter().map(l).collect();
                format!("{}, [{}], {}, {}", f(src), ts.join(", "), l(bad), l(out_of_range))
            }
            Instr::Memo { flag, target } => format!("m{flag}, {}", l(target)),
            Instr::MemoSet { flag } => format!("m{flag}"),
            Instr::Force { flag, thunk } => format!("m{flag}, {}", l(thunk)),
            Instr::Return { src } => v(src),
            Instr::Move { dst, src } => format!("{} <- {}", v(dst), v(src)),
            Instr::Scratch { .. } | Instr::EndThunk => String::new(),
        }
    }
}

fn fmt_double(d: f64) -> String {
    if d.is_nan() {
        decode_nan(d).to_string()
    } else {
        render_number(d)
    }
}

/// Executable form of a function body.
#[derive(Clone, Debug)]
pub struct CompiledFunction {
    pub name: Arc<str>,
    pub code: Vec<Instr>,
    pub arity: usize,
    pub v_regs: usize,
    pub f_regs: usize,
    pub memos: usize,
    /// The v register that receives the offending value on error paths.
    pub scratch: Reg,
}

impl CompiledFunction {
    /// A listing of the code. Stable for a given body within one version
    /// of the format.
    pub fn dump_ir(&self) -> String {
        let mut targets: Vec<Pc> = self.code.iter().flat_map(Instr::targets).collect();
        targets.sort_unstable();
        targets.dedup();
        let mut out = String::from("funcalc-ir v1\n");
        let _ = writeln!(
            out,
            "function {} arity={} v={} f={} memo={}",
            self.name, self.arity, self.v_regs, self.f_regs, self.memos
        );
        for (pc, ins) in self.code.iter().enumerate() {
            if targets.binary_search(&(pc as Pc)).is_ok() {
                let _ = writeln!(out, "L{pc}:");
            }
            let mut line = format!("  {:<9}", ins.mnemonic());
            if let Some(imm) = ins.immediate() {
                line.push_str(&imm);
                line.push(' ');
            }
            line.push_str(&ins.operands());
            let line = line.trim_end();
            let note = match ins {
                Instr::Box { .. } => "    ; boxing",
                Instr::TailCall { .. } | Instr::TailApply { .. } => "    ; tail call",
                _ => "",
            };
            let _ = writeln!(out, "{line}{note}");
        }
        out
    }

    /// Mnemonics and immediates only, joined by `"; "`.
    pub fn normalized(&self) -> String {
        self.code
            .iter()
            .map(|i| match i.immediate() {
                Some(imm) => format!("{} {imm}", i.mnemonic()),
                None => i.mnemonic().to_string(),
            })
            .collect::<Vec<_>>()
            .join("; ")
    }

    /// Number of `box` instructions.
    pub fn box_sites(&self) -> usize {
        self.code.iter().filter(|i| matches!(i, Instr::Box { .. })).count()
    }
}
