#![no_main]

use funcalc::{parse_formula, render_expr};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(e) = parse_formula(text) else { return };
    // Rendering is a fixed point after one parse.
    let shown = render_expr(&e);
    let again = parse_formula(&shown).expect("rendered formula parses");
    assert_eq!(render_expr(&again), shown);
});
