use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn epsc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epsc"))
        .args(args)
        .output()
        .expect("spawn epsc")
}

fn ok(args: &[&str]) -> Output {
    let out = epsc(args);
    assert!(
        out.status.success(),
        "epsc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth_small(dir: &Path, seed: &str) {
    ok(&[
        "--seed", seed, "synth", "--per-class", "6", "--n", "1024", "--channels", "2", "--out",
        s(dir),
    ]);
}

fn record_files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.csv")
        .collect();
    v.sort();
    v
}

#[test]
fn synth_writes_records_and_manifest() {
    let t = tempfile::tempdir().unwrap();
    let a = t.path().join("a");
    let b = t.path().join("b");
    synth_small(&a, "3");
    synth_small(&b, "3");
    let files = record_files(&a);
    assert_eq!(files.len(), 12);
    assert_eq!(files, record_files(&b));
    for f in &files {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
    let manifest = fs::read_to_string(a.join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 13);
    assert_eq!(manifest.lines().filter(|l| l.ends_with(",healthy")).count(), 6);
    assert_eq!(manifest.lines().filter(|l| l.ends_with(",patient")).count(), 6);
}

#[test]
fn synth_zero_per_class_gives_empty_manifest() {
    let t = tempfile::tempdir().unwrap();
    ok(&["synth", "--per-class", "0", "--out", s(t.path())]);
    let manifest = fs::read_to_string(t.path().join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 1);
    assert!(record_files(t.path()).is_empty());
}

#[test]
fn invalid_hurst_is_a_usage_error() {
    let t = tempfile::tempdir().unwrap();
    let out = epsc(&["synth", "--hurst", "0.3,1.5", "--out", s(t.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_manifest_is_a_usage_error() {
    let t = tempfile::tempdir().unwrap();
    let out = epsc(&[
        "extract",
        "--manifest",
        s(&t.path().join("none.csv")),
        "--out",
        s(&t.path().join("f.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(epsc(&["synth", "--bogus"]).status.code(), Some(2));
}

#[test]
fn extract_order_zero_gives_two_features() {
    let t = tempfile::tempdir().unwrap();
    let c = t.path().join("c");
    synth_small(&c, "1");
    let table = t.path().join("f.csv");
    let spectra = t.path().join("sp");
    ok(&[
        "--spectra",
        s(&spectra),
        "extract",
        "--manifest",
        s(&c.join("manifest.csv")),
        "--channels",
        "2",
        "--orders",
        "0",
        "--out",
        s(&table),
    ]);
    let text = fs::read_to_string(&table).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("subject_id,label,A,B"));
    assert_eq!(lines.count(), 12);
    let sp = fs::read_to_string(spectra.join("healthy_000_D0.csv")).unwrap();
    assert!(sp.starts_with("S,log_S,eps,log_eps,fit_A,fit_B,r2\n"));
    assert_eq!(sp.lines().count(), 7);
}

#[test]
fn extract_reports_failed_subjects_and_keeps_the_rest() {
    let t = tempfile::tempdir().unwrap();
    let c = t.path().join("c");
    synth_small(&c, "1");
    fs::write(c.join("healthy_002.csv"), "1,2\n3,oops\n").unwrap();
    let table = t.path().join("f.csv");
    let out = ok(&[
        "extract",
        "--manifest",
        s(&c.join("manifest.csv")),
        "--channels",
        "2",
        "--out",
        s(&table),
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("healthy_002"));
    assert_eq!(fs::read_to_string(&table).unwrap().lines().count(), 12);
}

fn separable_table(path: &Path, per_class: usize) {
    let mut text = String::from("subject_id,label,A,B\n");
    for i in 0..per_class {
        let x = i as f64 * 0.01;
        text.push_str(&format!("h{i},healthy,{},{}\n", 1.0 + x, -0.5 - x));
        text.push_str(&format!("p{i},patient,{},{}\n", -1.0 - x, -0.9 - x));
    }
    fs::write(path, text).unwrap();
}

#[test]
fn evaluate_separable_table() {
    let t = tempfile::tempdir().unwrap();
    let table = t.path().join("f.csv");
    separable_table(&table, 20);
    let csv = t.path().join("r.csv");
    let out = ok(&[
        "evaluate",
        "--table",
        s(&table),
        "--replications",
        "200",
        "--trees",
        "50",
        "--out",
        s(&csv),
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("RF OOB 95% CI"));
    assert!(text.contains("warning: low replications"));
    let rows = fs::read_to_string(&csv).unwrap();
    assert!(rows.starts_with("method,metric,point,ci_low,ci_high\n"));
    for line in rows.lines().filter(|l| l.contains(",accuracy,")) {
        let point: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!(point >= 95.0, "{line}");
    }
}

#[test]
fn evaluate_one_class_table_fails() {
    let t = tempfile::tempdir().unwrap();
    let table = t.path().join("f.csv");
    let mut text = String::from("subject_id,label,A,B\n");
    for i in 0..10 {
        text.push_str(&format!("h{i},healthy,{i},1\n"));
    }
    fs::write(&table, text).unwrap();
    let out = epsc(&["evaluate", "--table", s(&table), "--replications", "100"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_counts_subsets() {
    let t = tempfile::tempdir().unwrap();
    let table = t.path().join("f.csv");
    let mut text = String::from("subject_id,label,A,B,AD1,BD1,AD2,BD2,AD3,BD3,AD4,BD4\n");
    for i in 0..10 {
        let x = i as f64;
        let vals = |c: f64| (0..10).map(|j| format!("{}", c + x * 0.1 + j as f64)).collect::<Vec<_>>().join(",");
        text.push_str(&format!("h{i},healthy,{}\n", vals(0.0)));
        text.push_str(&format!("p{i},patient,{}\n", vals(5.0)));
    }
    fs::write(&table, text).unwrap();
    for (cap, expected) in [("2", 55), ("4", 385)] {
        let out = ok(&[
            "sweep", "--table", s(&table), "--cap", cap, "--folds", "2", "--trees", "3",
        ]);
        let text = String::from_utf8(out.stdout).unwrap();
        assert_eq!(text.lines().count(), expected + 1, "cap {cap}");
        let accs: Vec<f64> = text
            .lines()
            .skip(1)
            .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
            .collect();
        assert!(accs.windows(2).all(|w| w[0] >= w[1]));
    }
}

#[test]
fn dumped_config_replays_identically() {
    let t = tempfile::tempdir().unwrap();
    let table = t.path().join("f.csv");
    separable_table(&table, 12);
    let conf = t.path().join("run.conf");
    let first = ok(&[
        "--seed",
        "9",
        "--dump-config",
        s(&conf),
        "evaluate",
        "--table",
        s(&table),
        "--replications",
        "150",
        "--trees",
        "25",
    ]);
    let second = ok(&["--config", s(&conf), "evaluate", "--table", s(&table)]);
    assert_eq!(first.stdout, second.stdout);
    let dumped = fs::read_to_string(&conf).unwrap();
    assert!(dumped.contains("seed = 9"));
    assert!(dumped.contains("replications = 150"));
}

#[test]
fn thread_count_does_not_change_outputs() {
    let t = tempfile::tempdir().unwrap();
    let c = t.path().join("c");
    synth_small(&c, "5");
    let mut tables = Vec::new();
    let mut reports = Vec::new();
    for threads in ["1", "3"] {
        let table = t.path().join(format!("f{threads}.csv"));
        ok(&[
            "--threads", threads, "extract", "--manifest", s(&c.join("manifest.csv")),
            "--channels", "2", "--out", s(&table),
        ]);
        tables.push(fs::read(&table).unwrap());
        let out = ok(&[
            "--threads", threads, "evaluate", "--table", s(&table), "--replications", "120",
            "--trees", "20",
        ]);
        reports.push(out.stdout);
    }
    assert_eq!(tables[0], tables[1]);
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn bad_config_is_a_usage_error() {
    let t = tempfile::tempdir().unwrap();
    let conf = t.path().join("bad.conf");
    fs::write(&conf, "nonsense = 1\n").unwrap();
    let out = epsc(&["--config", s(&conf), "synth", "--out", s(t.path())]);
    assert_eq!(out.status.code(), Some(2));
}
