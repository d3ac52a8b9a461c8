#![no_main]

use hystid::linear_id::LinearModel;
use libfuzzer_sys::fuzz_target;
use num_complex::Complex64;

fuzz_target!(|data: &[u8]| {
    let Ok(model) = serde_json::from_slice::<LinearModel>(data) else {
        return;
    };
    if model.order() <= 32 {
        let z: Vec<Complex64> = (1..8).map(|k| Complex64::from_polar(1.0, 0.3 * k as f64)).collect();
        let g = model.frequency_response(&z);
        assert_eq!(g.len(), z.len());
        let _ = model.is_stable();
    }
});
