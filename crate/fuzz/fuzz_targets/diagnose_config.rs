#![no_main]

use gauss_edf::DiagnoseConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = DiagnoseConfig::from_json_slice(data) {
        // small grids only: assessment builds every dimension
        if cfg.m_grid.last().is_some_and(|&m| m <= 256) && cfg.models().len() <= 4 {
            let _ = cfg.run();
        }
    }
});
