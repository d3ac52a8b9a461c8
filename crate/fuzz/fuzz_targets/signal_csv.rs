#![no_main]

use hystid::io::{signal_from_csv, signal_to_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(x) = signal_from_csv(text) {
        let back = signal_from_csv(&signal_to_csv(&x)).expect("round trip");
        assert_eq!(back.len(), x.len());
        for (a, b) in x.iter().zip(&back) {
            assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
    }
});
