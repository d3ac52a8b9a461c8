#![no_main]

use hystid::pnlss::{pnlss_simulate, PnlssModel};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(model) = serde_json::from_slice::<PnlssModel>(data) else {
        return;
    };
    let p = model.to_params();
    assert_eq!(p.len(), model.num_parameters());
    if model.order() <= 8 && model.state_basis.len() <= 256 {
        let u = [1.0, -0.5, 0.25, 0.0, 2.0, -1.0, 0.5, 0.0];
        let _ = pnlss_simulate(&model, &u, &vec![0.0; model.order()]);
    }
});
