#![no_main]

use libfuzzer_sys::fuzz_target;
use localflow::datasets::parse_csv;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for header in [false, true] {
        if let Ok(s) = parse_csv(text, header) {
            assert!(s.as_slice().iter().all(|v| v.is_finite()));
            assert_eq!(s.as_slice().len(), s.len() * s.dim());
        }
    }
});
