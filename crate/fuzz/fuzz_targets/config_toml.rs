#![no_main]

use bnmf_cli::config::FileConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = FileConfig::parse(text) {
        if let Some(k) = &cfg.experiment.k_values {
            let _ = k.resolve();
        }
        if let Some(a) = cfg.ard {
            let _ = a.as_flag();
            let _ = a.as_mode();
        }
    }
});
