//! End-to-end runs of the `hapsim` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
num_devices = 40
num_active = 3
t_p = 16
p_pilot = 2
trials = 2
";

fn hapsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hapsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scenario(dir: &Path) -> String {
    let path = dir.join("small.toml");
    fs::write(&path, SMALL).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn run_writes_results_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path());
    let out = dir.path().join("out");
    let res = hapsim(&["--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("aer"), "{stdout}");
    for name in [
        "trials.csv",
        "diagnostics.csv",
        "summary.txt",
        "metadata.txt",
        "effective_config.toml",
    ] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
}

#[test]
fn overrides_reach_the_effective_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path());
    let out = dir.path().join("out");
    let res = hapsim(&[
        "--config",
        &cfg,
        "--mode",
        "cloud",
        "--seed",
        "7",
        "--trials",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let effective = fs::read_to_string(out.join("effective_config.toml")).unwrap();
    assert!(effective.contains("mode = \"cloud\"\n"), "{effective}");
    assert!(effective.contains("master_seed = 7\n"), "{effective}");
    let trials = fs::read_to_string(out.join("trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 3);
}

#[test]
fn sweep_writes_one_trial_file_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path());
    let out = dir.path().join("out");
    let res = hapsim(&[
        "--config",
        &cfg,
        "--sweep",
        "t_p=12,16",
        "--variants",
        "sic,spatial-jadce",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let sweep = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().filter(|l| l.starts_with("t_p,")).count(), 4);
    assert!(out.join("trials_t_p_12_sic.csv").is_file());
    assert!(out.join("trials_t_p_16_spatial-jadce.csv").is_file());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(hapsim(&["--config", &cfg, "--out", a.to_str().unwrap()])
        .status
        .success());
    assert!(
        hapsim(&["--config", &cfg, "--workers", "2", "--out", b.to_str().unwrap()])
            .status
            .success()
    );
    for name in ["trials.csv", "diagnostics.csv", "topology.csv"] {
        let (x, y) = (fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap());
        assert_eq!(x, y, "{name} differs");
    }
}

#[test]
fn dump_channels_writes_the_trial() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path());
    let out = dir.path().join("out");
    let res = hapsim(&[
        "--config",
        &cfg,
        "--trials",
        "1",
        "--dump-channels",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(out.join("channels_trial0.csv")).unwrap();
    assert!(csv.starts_with("device,hap,subcarrier,antenna,re,im\n"));
    assert!(csv.lines().count() > 1);
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "num_devices = 10\nnum_active = 20\n").unwrap();
    let res = hapsim(&[
        "--config",
        bad.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("num_active"));

    let res = hapsim(&["--preset", "nowhere"]);
    assert_eq!(res.status.code(), Some(1));

    let cfg = scenario(dir.path());
    let res = hapsim(&[
        "--config",
        &cfg,
        "--sweep",
        "bandwidth=1,2",
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn unwritable_output_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path());
    let blocker = dir.path().join("file");
    fs::write(&blocker, "not a directory").unwrap();
    let res = hapsim(&[
        "--config",
        &cfg,
        "--trials",
        "1",
        "--out",
        blocker.join("out").to_str().unwrap(),
    ]);
    assert_eq!(
        res.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
}
