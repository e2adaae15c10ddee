#![no_main]

use libfuzzer_sys::fuzz_target;
use seqdesign::config::RunConfigFile;

fuzz_target!(|data: &[u8]| {
    if let Ok((file, resolved)) = RunConfigFile::parse_validated(data) {
        // A validated config must survive a round trip unchanged.
        let text = serde_json::to_vec(&file).unwrap();
        let (again, _) = RunConfigFile::parse_validated(&text).unwrap();
        assert_eq!(again, file);
        assert!(resolved.n_runs >= 1 && resolved.spec.n_epochs >= 1);
    }
});
