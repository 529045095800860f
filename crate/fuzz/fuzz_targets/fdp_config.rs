#![no_main]

use gauss_edf::FdpExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = FdpExperimentConfig::from_json_slice(data);
});
