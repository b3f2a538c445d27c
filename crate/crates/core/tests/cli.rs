use std::fs;
use std::process::Command;

fn fastslow() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fastslow"))
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("static");
    let status = fastslow()
        .args(["run", "--env", "static", "--size", "5", "--episodes", "6", "--seeds", "2", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    assert!(String::from_utf8_lossy(&status.stdout).contains("mean: solve"));
    assert_eq!(fs::read_to_string(out.join("episodes.csv")).unwrap().lines().count(), 13);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.cfg");
    fs::write(&config, "env=static\nsize=7\nepisodes=3\nseeds=1\nagent=qlearn\n").unwrap();
    let out = dir.path().join("out");
    let status = fastslow()
        .args(["run", "--size", "4", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = fs::read_to_string(out.join("episodes.csv")).unwrap();
    // Static goal sits at (n-1, n-1): the flag's 4 wins over the file's 7.
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",0,0,3,3")), "{csv}");
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn config_errors_exit_nonzero() {
    for args in [
        vec!["run", "--size", "1"],
        vec!["run", "--agent", "ppo"],
        vec!["run", "--train-timing", "sometimes"],
        vec!["run", "--branches", "0"],
        vec!["predict", "--size", "1"],
    ] {
        let output = fastslow().args(&args).output().unwrap();
        assert!(!output.status.success(), "{args:?}");
        assert!(String::from_utf8_lossy(&output.stderr).contains("error"), "{args:?}");
    }
}

#[test]
fn predict_prints_csv() {
    let output = fastslow().args(["predict", "--task", "action", "--size", "5", "--epochs", "2"]).output().unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "epoch,accuracy,phase");
    // Untrained record plus two epochs per phase.
    assert_eq!(lines.len(), 1 + 1 + 4);
}

#[test]
fn sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.txt");
    fs::write(&grid, "k=0,2\n").unwrap();
    let out = dir.path().join("sweep.csv");
    let status = fastslow()
        .args(["sweep", "--agent", "qlearn", "--env", "static", "--size", "4", "--episodes", "4", "--seeds", "1"])
        .arg("--grid")
        .arg(&grid)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(fs::read_to_string(out).unwrap().lines().count(), 3);
}
