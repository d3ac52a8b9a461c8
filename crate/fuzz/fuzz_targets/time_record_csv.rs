#![no_main]

use hystid::io::{time_record_from_csv, time_record_to_csv, RecordSidecar};
use libfuzzer_sys::fuzz_target;

// Input layout: sidecar JSON, a NUL byte, then the CSV body.
fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == 0).unwrap_or(data.len());
    let (Ok(side), Ok(csv)) = (
        std::str::from_utf8(&data[..split]),
        std::str::from_utf8(data.get(split + 1..).unwrap_or_default()),
    ) else {
        return;
    };
    let Ok(sidecar) = RecordSidecar::from_json(side) else {
        return;
    };
    if let Ok(record) = time_record_from_csv(csv, &sidecar) {
        let back = time_record_from_csv(&time_record_to_csv(&record), &sidecar).expect("round trip");
        assert_eq!(back.input.len(), record.input.len());
    }
});
