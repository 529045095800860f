#![no_main]

use gauss_edf::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = ExperimentConfig::from_json_slice(data) {
        let text = serde_json::to_string(&cfg).unwrap();
        let again = ExperimentConfig::from_json_slice(text.as_bytes()).unwrap();
        assert_eq!(cfg, again);
    }
});
