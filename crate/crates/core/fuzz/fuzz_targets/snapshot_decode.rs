#![no_main]

use libfuzzer_sys::fuzz_target;
use seqdesign::filter::FilterSnapshot;

fuzz_target!(|data: &[u8]| {
    if let Ok(mut filter) = FilterSnapshot::decode(data) {
        let total: f64 = filter.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-6);
        let _ = filter.effective_sample_size();
        if filter.len() <= 4096 {
            filter.resample();
            let again = FilterSnapshot::decode(filter.snapshot().to_json().as_bytes());
            assert!(again.is_ok() || filter.particles().flatten().any(|v| !v.is_finite()));
        }
    }
});
