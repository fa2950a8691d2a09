#![allow(dead_code)]

pub mod gen;

use funcalc::wbfile;
use funcalc::{Config, Value, Workbook};

/// The example functions, on one function sheet.
pub const CORPUS: &str = include_str!("../../../../workbooks/corpus.wb");

pub fn corpus() -> Workbook {
    corpus_with(Config::default())
}

pub fn corpus_with(config: Config) -> Workbook {
    let mut wb = Workbook::with_config(config);
    wbfile::load_into(&mut wb, CORPUS).expect("corpus loads");
    wb.ensure_functions();
    let diags = wb.define_diagnostics();
    assert!(diags.is_empty(), "{diags:?}");
    wb
}

pub fn num(d: f64) -> Value {
    Value::Number(d)
}

/// Evaluates a formula on the Main sheet.
pub fn eval(wb: &Workbook, formula: &str) -> Value {
    let s = wb.sheet_index("Main").unwrap();
    wb.eval_formula(s, formula).unwrap()
}
