#![no_main]

use gauss_edf::ModelSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // parse + validate must never panic; building is capped to keep runs fast
    if let Ok(spec) = ModelSpec::from_json_slice(data) {
        if spec.m <= 64 {
            let _ = spec.build();
        }
    }
});
