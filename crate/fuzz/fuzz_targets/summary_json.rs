#![no_main]

use gauss_edf::McSummary;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = McSummary::from_json_str(text) {
        let out = s.to_json().unwrap();
        let back = McSummary::from_json_str(&out).unwrap();
        assert_eq!(back.to_json().unwrap(), out);
    }
});
