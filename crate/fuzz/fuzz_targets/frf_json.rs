#![no_main]

use hystid::linear_id::FrfEstimate;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(frf) = serde_json::from_slice::<FrfEstimate>(data) else {
        return;
    };
    if frf.validate().is_ok() {
        let n = frf.excited_lines.len();
        assert_eq!(frf.frequencies_hz().len(), n);
        assert_eq!(frf.z().len(), n);
        assert_eq!(frf.weights().len(), n);
    }
});
