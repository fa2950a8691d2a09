#![no_main]

use funcalc::wbfile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(wb) = wbfile::load(text) else { return };
    let saved = wbfile::save(&wb);
    let again = wbfile::load(&saved).expect("saved workbook loads");
    assert_eq!(wbfile::save(&again), saved);
});
