//! The fuzz-target checks, run over the checked-in seeds and over random
//! formula-like strings.

use std::path::PathBuf;

use funcalc::engine::{parse_cell_input, parse_constant};
use funcalc::values::{decode_nan, encode_error, is_tagged_nan};
use funcalc::{parse_formula, render_expr, wbfile, ErrorValue, Value};
use proptest::prelude::*;

fn check_formula(text: &str) {
    let Ok(e) = parse_formula(text) else { return };
    let shown = render_expr(&e);
    let again = parse_formula(&shown).unwrap_or_else(|err| panic!("{text:?} renders as {shown:?}: {err}"));
    assert_eq!(render_expr(&again), shown, "{text:?}");
}

fn check_workbook(text: &str) {
    let Ok(wb) = wbfile::load(text) else { return };
    let saved = wbfile::save(&wb);
    let again = wbfile::load(&saved).unwrap_or_else(|e| panic!("{text:?} saves as unloadable {saved:?}: {e}"));
    assert_eq!(wbfile::save(&again), saved);
}

fn check_nan(bits: u64) {
    let d = f64::from_bits(bits);
    let v = Value::from_double_or_nan(d);
    if !d.is_nan() {
        assert_eq!(v.to_double_or_nan().to_bits(), bits);
        return;
    }
    let e = decode_nan(d);
    assert_eq!(v, Value::Error(e));
    if !is_tagged_nan(d) {
        assert_eq!(e, ErrorValue::NUM);
    }
    assert_eq!(decode_nan(encode_error(e)), e);
}

fn seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|f| std::fs::read(f.unwrap().path()).unwrap())
        .collect();
    assert!(!out.is_empty());
    out.sort();
    out
}

#[test]
fn formula_seeds() {
    for s in seeds("parse_formula") {
        check_formula(std::str::from_utf8(&s).unwrap());
    }
}

#[test]
fn cell_input_seeds() {
    for s in seeds("parse_cell_input") {
        let text = std::str::from_utf8(&s).unwrap();
        let _ = parse_cell_input(text);
        let _ = parse_constant(text);
    }
}

#[test]
fn workbook_seeds() {
    for s in seeds("parse_workbook") {
        check_workbook(std::str::from_utf8(&s).unwrap());
    }
}

#[test]
fn nan_seeds() {
    for s in seeds("decode_nan") {
        check_nan(u64::from_le_bytes(s[..8].try_into().unwrap()));
    }
}

const TOKENS: &[&str] = &[
    "A1", "B2", "Sheet1!C3", "A1:B2", "1", "2.5", "0", "\"a\"", "\"\"", "#N/A", "#VALUE!", "IF(", "SUM(", "NOT(",
    "CLOSURE(\"ADD3\",", "+", "-", "*", "/", "^", "&", "=", "<=", "<>", ",", "(", ")", "%",
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn formulas_never_panic(text in "=[-+*/^&=<>(),:!$#%\"' A-Z0-9a-c.]{0,40}") {
        check_formula(&text);
        let _ = parse_cell_input(&text);
    }

    #[test]
    fn structured_formulas_round_trip(tokens in prop::collection::vec(prop::sample::select(TOKENS), 0..16)) {
        check_formula(&format!("={}", tokens.concat()));
    }

    #[test]
    fn workbooks_never_panic(lines in prop::collection::vec("(sheet [A-C]|function sheet F|[A-C][1-3] = [=0-9A-Z+\"(),]{0,12}|# .{0,5}|[a-z =]{0,8})", 0..8)) {
        check_workbook(&lines.join("\n"));
    }

    #[test]
    fn nans_decode(bits in any::<u64>()) {
        check_nan(bits);
        check_nan(bits | 0x7FF0_0000_0000_0000);
    }
}
