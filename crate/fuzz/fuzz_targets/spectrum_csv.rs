#![no_main]

use hystid::io::{spectrum_from_csv, spectrum_to_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    for f0 in [None, Some(0.5)] {
        if let Ok(s) = spectrum_from_csv(text, f0) {
            let back = spectrum_from_csv(&spectrum_to_csv(&s), f0).expect("round trip");
            assert_eq!(back.values.len(), s.values.len());
        }
    }
});
