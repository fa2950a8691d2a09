//! A headless spreadsheet engine with sheet-defined functions.
//!
//! Ordinary sheets are evaluated interpretively. A sheet-defined function
//! is declared on a function sheet with `DEFINE("NAME", out, in1, ...)`
//! and compiled to a register IR with an unboxed numeric fast path.
//! `SPECIALIZE(closure)` partially evaluates a function with respect to the
//! closure's captured arguments and compiles the residual.

pub mod bench;
pub mod compile;
pub mod engine;
pub mod formula;
pub mod peval;
pub mod sdf;
pub mod trace;
pub mod values;
pub mod wbfile;

pub use engine::{Config, SheetKind, Workbook, WorkbookError};
pub use formula::{parse_formula, render_expr, CellAddr, CellPos, Expr, ParseError};
pub use sdf::{FunctionTable, SdfId, SdfInfo};
pub use values::{ErrorValue, FunctionValue, Value};
