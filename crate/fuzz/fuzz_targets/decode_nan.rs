#![no_main]

use funcalc::values::{decode_nan, encode_error, is_tagged_nan};
use funcalc::{ErrorValue, Value};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: [u8; 8]| {
    let d = f64::from_bits(u64::from_le_bytes(data));
    let v = Value::from_double_or_nan(d);
    if !d.is_nan() {
        assert_eq!(v.to_double_or_nan().to_bits(), d.to_bits());
        return;
    }
    let e = decode_nan(d);
    assert_eq!(v, Value::Error(e));
    if !is_tagged_nan(d) {
        assert_eq!(e, ErrorValue::NUM);
    }
    assert_eq!(decode_nan(encode_error(e)), e);
});
