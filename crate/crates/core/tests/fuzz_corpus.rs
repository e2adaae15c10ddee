//! Replays the checked-in fuzz corpus through the same entry points as the
//! fuzz targets.

use std::fs;
use std::path::PathBuf;

use seqdesign::config::RunConfigFile;
use seqdesign::filter::FilterSnapshot;
use seqdesign::UtilityConfig;

fn corpus(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus").join(target);
    let mut files: Vec<_> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert!(!files.is_empty(), "no seeds in {}", dir.display());
    files.into_iter().map(|p| (p.clone(), fs::read(p).unwrap())).collect()
}

#[test]
fn config_seeds() {
    let mut accepted = 0;
    for (path, data) in corpus("config_parse") {
        if let Ok((file, _)) = RunConfigFile::parse_validated(&data) {
            let text = serde_json::to_vec(&file).unwrap();
            let (again, _) = RunConfigFile::parse_validated(&text).unwrap();
            assert_eq!(again, file, "{}", path.display());
            accepted += 1;
        }
    }
    assert_eq!(accepted, 4);
}

#[test]
fn snapshot_seeds() {
    let mut accepted = 0;
    for (path, data) in corpus("snapshot_decode") {
        if let Ok(mut f) = FilterSnapshot::decode(&data) {
            let total: f64 = f.weights().iter().sum();
            assert!((total - 1.0).abs() < 1e-9, "{}", path.display());
            f.resample();
            accepted += 1;
        }
    }
    assert_eq!(accepted, 3);
}

#[test]
fn label_seeds() {
    for (path, data) in corpus("utility_label") {
        let s = String::from_utf8(data).unwrap();
        if let Ok(cfg) = UtilityConfig::parse_label(&s) {
            let again = UtilityConfig::parse_label(&cfg.label()).unwrap();
            assert_eq!(again.algorithm, cfg.algorithm, "{}", path.display());
        }
    }
}
