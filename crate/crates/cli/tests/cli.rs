use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "horizon = 50\n[users]\nembb = 2\nurllc = 2\n[grid]\nnum_rbs = 5\n[nn]\nhidden = [8]\nepochs = 1\ntrain_slots = 20\ntrain_episodes = 1\n";

fn cli(dir: &Path, args: &[&str]) -> Output {
    let scenario = dir.join("s.toml");
    fs::write(&scenario, SMALL).unwrap();
    Command::new(env!("CARGO_BIN_EXE_ntn-twin"))
        .args(args)
        .arg("--scenario")
        .arg(&scenario)
        .env("NTN_TWIN_OUT", dir.join("out"))
        .output()
        .unwrap()
}

#[test]
fn run_writes_into_the_env_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(dir.path(), &["run", "--lambdas", "30"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("policy_id,lambda,"));
    assert!(dir.path().join("out/orthogonal_lambda30.csv").exists());
    assert!(dir.path().join("out/comparison.csv").exists());
}

#[test]
fn train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(dir.path(), &["train"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let weights = dir.path().join("out/weights.bin");
    assert!(weights.exists() && dir.path().join("out/loss.csv").exists());

    let out = cli(
        dir.path(),
        &[
            "eval",
            "--lambdas",
            "20",
            "--weights",
            weights.to_str().unwrap(),
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = String::from_utf8(out.stdout).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.contains("\ndnn,") && table.contains("\ndnn+repair,"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = cli(dir.path(), &["eval"]);
    assert_eq!(missing.status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[users]\nembb = 0\nurllc = 0\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ntn-twin"))
        .args(["run", "--scenario", bad.to_str().unwrap()])
        .env("NTN_TWIN_OUT", dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn seed_override_changes_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let read = |seed: &str| {
        let out = cli(dir.path(), &["run", "--lambdas", "30", "--seed", seed]);
        assert!(out.status.success());
        fs::read(dir.path().join("out/orthogonal_lambda30.csv")).unwrap()
    };
    let (a, b, c) = (read("1"), read("2"), read("1"));
    assert_eq!(a, c);
    assert_ne!(a, b);
}
