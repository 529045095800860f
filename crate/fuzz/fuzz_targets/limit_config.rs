#![no_main]

use gauss_edf::LimitExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = LimitExperimentConfig::from_json_slice(data);
});
