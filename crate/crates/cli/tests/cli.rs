use std::path::Path;
use std::process::{Command, Output};

fn liet(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_liet")).args(args).current_dir(cwd).output().expect("binary runs")
}

#[test]
fn run_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let out = liet(&["run", "--suite", "wash_dishes", "--seed", "3", "--no-utility", "--out", "run"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("wash_dishes"), "{stdout}");
    assert!(dir.path().join("run/report.json").exists());
    let records = dir.path().join("run/records");
    assert_eq!(std::fs::read_dir(&records).unwrap().count(), 1);

    let out = liet(&["replay", "run"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("pass"));
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("future.toml"), "schema_version = 99\n").unwrap();
    let out = liet(&["run", "--config", "future.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema"));

    let out = liet(&["run", "--suite", "no_such_task", "--no-utility"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn utility_without_a_model_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let out = liet(&["run", "--suite", "wash_dishes", "--seed", "0"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("utility"));
}
