#![no_main]

use gauss_edf::{Figure1Config, Figure2Config};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = Figure1Config::from_json_slice(data);
    let _ = Figure2Config::from_json_slice(data);
});
