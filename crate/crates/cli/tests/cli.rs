use std::path::Path;
use std::process::{Command, Output};

fn scdv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scdv"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn synth(dir: &Path) {
    let out = scdv(&["synth-corpus", "--out", dir.to_str().unwrap(), "--docs", "120"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("train").is_dir() && dir.join("test").is_dir());
}

fn run_args<'a>(data: &'a str, work: &'a str) -> Vec<&'a str> {
    let mut v = vec!["--config", concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/synthetic.conf")];
    v.extend(["--dataset", data, "--work-dir", work, "--deterministic"]);
    v.extend(["--set", "dim=16", "--set", "epochs=5", "--set", "k=4", "--set", "l=2", "--set", "cv_folds=2"]);
    v
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(scdv(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(scdv(&["run", "--set", "nonsense"]).status.code(), Some(1));
    assert_eq!(scdv(&["run", "--set", "k=abc"]).status.code(), Some(1));
}

#[test]
fn help_exits_cleanly() {
    let out = scdv(&["--help"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("synth-corpus"));
}

#[test]
fn missing_artifact_exits_with_two() {
    let root = tempfile::tempdir().unwrap();
    let work = root.path().join("work");
    let out = scdv(&["cluster", "--work-dir", work.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train-embeddings"));
}

#[test]
fn missing_dataset_exits_with_two() {
    let root = tempfile::tempdir().unwrap();
    let work = root.path().join("work");
    let gone = root.path().join("gone");
    let out = scdv(&["preprocess", "--dataset", gone.to_str().unwrap(), "--work-dir", work.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_then_report() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    synth(&data);
    let work = root.path().join("work");
    let (d, w) = (data.to_str().unwrap(), work.to_str().unwrap());

    let mut args = vec!["run"];
    args.extend(run_args(d, w));
    let out = scdv(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("evaluate: done"));
    assert!(text.contains("f1"), "{text}");
    assert!(work.join("metrics.json").is_file());

    let again = stdout(&scdv(&args));
    assert!(again.contains("compose: skipped (up to date)"));

    let report = scdv(&["report", "--json", "--work-dir", w]);
    assert!(report.status.success());
    let json: serde_json::Value = serde_json::from_slice(&report.stdout).unwrap();
    assert!(json.is_object());
    let table = scdv(&["report", "--work-dir", w]);
    assert!(table.status.success() && !table.stdout.is_empty());
}
