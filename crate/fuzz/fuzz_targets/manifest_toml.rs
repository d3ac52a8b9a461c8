#![no_main]

use hystid_cli::ExperimentManifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(m) = ExperimentManifest::from_toml(text) {
        // an accepted manifest must survive its own serialization
        let again = ExperimentManifest::from_toml(&m.to_toml()).expect("re-parse of a valid manifest");
        assert_eq!(again.to_toml(), m.to_toml());
        let _ = m.estimation_spec(0).band_lines();
        let _ = m.pnlss_config();
    }
});
