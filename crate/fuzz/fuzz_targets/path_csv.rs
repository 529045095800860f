#![no_main]

use gauss_edf::ProcessPath;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(p) = ProcessPath::from_csv_str(text) {
        let out = p.to_csv_string(&[]);
        let back = ProcessPath::from_csv_str(&out).unwrap();
        assert_eq!(back.values.len(), p.values.len());
    }
});
