#![no_main]

use libfuzzer_sys::fuzz_target;
use seqdesign::UtilityConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(cfg) = UtilityConfig::parse_label(s) {
            let again = UtilityConfig::parse_label(&cfg.label()).unwrap();
            assert_eq!(again.algorithm, cfg.algorithm);
            if cfg.algorithm.is_adaptive() {
                assert_eq!(again.n_samples, cfg.n_samples);
            }
        }
    }
});
