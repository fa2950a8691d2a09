#![no_main]

use funcalc::engine::{parse_cell_input, parse_constant};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_cell_input(text);
    let _ = parse_constant(text);
});
