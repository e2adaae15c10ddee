use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn seqdesign(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seqdesign")).args(args).env("SEQDESIGN_THREADS", "2").output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

#[test]
fn run_writes_expected_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = seqdesign(&[
        "run", "--preset", "lorentzian", "--utility", "maxmin", "--n-samples", "2", "--n-runs", "10", "--n-epochs", "200",
        "--out", out,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["trace.csv", "timing.csv", "summary.json", "timing.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    assert_eq!(csv_rows(&dir.path().join("trace.csv")).len(), 10 * 200);
    assert_eq!(csv_rows(&dir.path().join("timing.csv")).len(), 10 * 200);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("final mean std x0="), "{stdout}");
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = seqdesign(&[
            "run", "--preset", "ramsey", "--utility", "kld@50", "--n-runs", "3", "--n-epochs", "20", "--seed", "77", "--out",
            d.path().to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let ta = fs::read(a.path().join("trace.csv")).unwrap();
    let tb = fs::read(b.path().join("trace.csv")).unwrap();
    assert!(!ta.is_empty());
    assert_eq!(ta, tb);
}

#[test]
fn invalid_algorithm_names_the_field() {
    let o = seqdesign(&["run", "--preset", "lorentzian", "--utility", "bogus", "--n-runs", "2", "--n-epochs", "2"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("utility.algorithm"), "{}", stderr(&o));
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"experiment":{"preset":"lorentzian"},"filter":{"n_particle":10}}"#).unwrap();
    let o = seqdesign(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("n_particle"), "{}", stderr(&o));

    fs::write(&cfg, r#"{"experiment":{"preset":"lorentzian","noise":{"sigma":0}}}"#).unwrap();
    let o = seqdesign(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("noise.sigma"), "{}", stderr(&o));

    let o = seqdesign(&["run", "--config", dir.path().join("missing.json").to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    let out = dir.path().join("res");
    fs::write(
        &cfg,
        format!(
            r#"{{"experiment":{{"preset":"lorentzian"}},"filter":{{"n_particles":500}},
               "utility":{{"algorithm":"variance","n_samples":100}},
               "run":{{"n_epochs":7,"n_runs":4,"base_seed":3}},
               "output":{{"directory":{:?},"formats":["csv","snapshot"]}}}}"#,
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let o = seqdesign(&["run", "--config", cfg.to_str().unwrap(), "--n-runs", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(csv_rows(&out.join("trace.csv")).len(), 2 * 7);
    assert!(!out.join("summary.json").exists());
    let snap = fs::read(out.join("snapshots/run_0001.json")).unwrap();
    let f = seqdesign::filter::FilterSnapshot::decode(&snap).unwrap();
    assert_eq!(f.len(), 500);
}

#[test]
fn compare_needs_two_algorithms() {
    let o = seqdesign(&["compare", "--preset", "lorentzian", "--algorithms", "kld", "--n-runs", "2", "--n-epochs", "2"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("algorithms"), "{}", stderr(&o));
}

#[test]
fn compare_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = seqdesign(&[
        "compare", "--preset", "lorentzian", "--algorithms", "kld,variance,pseudo,maxmin@2,random", "--n-runs", "2",
        "--n-epochs", "30", "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stats = csv_rows(&dir.path().join("compare_stats.csv"));
    assert_eq!(stats.len(), 5 * 30);
    let settings = csv_rows(&dir.path().join("compare_settings.csv"));
    assert_eq!(settings.len(), 5 * 2 * 30);

    let timing = csv_rows(&dir.path().join("compare_timing.csv"));
    let design = |alg: &str| -> f64 {
        timing.iter().find(|r| &r[0] == alg && &r[1] == "design_total").unwrap()[2].parse().unwrap()
    };
    assert!(design("maxmin@2") < 0.1 * design("kld@1000"));
    assert!(dir.path().join("kld@1000/trace.csv").exists());
}

#[test]
fn single_run_compare_degenerates() {
    let dir = tempfile::tempdir().unwrap();
    let o = seqdesign(&[
        "compare", "--preset", "ramsey", "--algorithms", "maxmin@2,random", "--n-runs", "1", "--n-epochs", "10", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stats = csv_rows(&dir.path().join("compare_stats.csv"));
    assert_eq!(stats.len(), 2 * 10 * 4);
    for r in &stats {
        assert_eq!(&r[3], &r[4]);
        assert_eq!(&r[3], &r[5]);
        assert_eq!(&r[6], &r[7]);
        assert_eq!(&r[6], &r[8]);
    }
}

#[test]
fn fig1_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = seqdesign(&["fig1", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(csv_rows(&dir.path().join("fig1_outcomes.csv")).len(), 2 * 100 * 200);
    let util = csv_rows(&dir.path().join("fig1_utility.csv"));
    assert_eq!(util.len(), 2 * 200);
    assert_eq!(util.iter().filter(|r| &r[0] == "reuse").count(), 200);

    let o = seqdesign(&["fig1", "--n-samples", "4", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(csv_rows(&dir.path().join("fig1_outcomes.csv")).len(), 2 * 4 * 200);
    let util = csv_rows(&dir.path().join("fig1_utility.csv"));
    assert!(util.iter().all(|r| r[3].parse::<f64>().unwrap().is_finite()));

    let o = seqdesign(&["fig1", "--n-samples", "3", "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
}
