//! Scenario files on disk through to result files.

use std::fs;

use hapsim::config::{LoadedScenario, ProcessingMode};
use hapsim::experiment::run_scenario;
use hapsim::output::{self, DIAGNOSTICS_HEADER, TRIALS_HEADER};
use hapsim::Error;

const SMALL: &str = "\
schema_version = 1
num_devices = 40
num_active = 3
t_p = 16
p_pilot = 2
trials = 3
mode = \"cellular\"
";

#[test]
fn file_round_trips_through_effective_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("small.toml");
    fs::write(&path, SMALL).unwrap();
    let loaded = LoadedScenario::load(&path).unwrap();
    assert_eq!(loaded.config.mode, ProcessingMode::Cellular);
    assert_eq!(loaded.config.num_devices, 40);

    let effective = loaded.effective_toml();
    assert!(effective.contains("num_haps = 7  # default"));
    assert!(!effective.contains("num_devices = 40  # default"));
    let again = LoadedScenario::parse(&effective, "effective").unwrap();
    assert_eq!(again.config, loaded.config);
}

#[test]
fn constraint_errors_point_at_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "num_devices = 40\nnum_active = 3\nt_p = 0\n").unwrap();
    match LoadedScenario::load(&path) {
        Err(Error::Constraint { key, line, .. }) => {
            assert_eq!(key, "t_p");
            assert_eq!(line, Some(3));
        }
        other => panic!("expected a constraint error, got {other:?}"),
    }
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = LoadedScenario::load(&dir.path().join("absent.toml")).unwrap_err();
    assert!(matches!(err, Error::Io(_)), "{err:?}");
}

#[test]
fn run_writes_every_artefact() {
    let loaded = LoadedScenario::parse(SMALL, "inline").unwrap();
    let run = run_scenario(&loaded.config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    output::write_run(dir.path(), &loaded, &run).unwrap();

    let trials = fs::read_to_string(dir.path().join("trials.csv")).unwrap();
    let body: Vec<&str> = trials.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], TRIALS_HEADER);
    assert_eq!(body.len(), 1 + loaded.config.trials);

    let diagnostics = fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    assert!(diagnostics.lines().any(|l| l == DIAGNOSTICS_HEADER));
    for name in [
        "summary.txt",
        "metadata.txt",
        "effective_config.toml",
        "topology.csv",
    ] {
        assert!(dir.path().join(name).is_file(), "{name} missing");
    }
    let metadata = fs::read_to_string(dir.path().join("metadata.txt")).unwrap();
    assert!(metadata.contains(&loaded.config.fingerprint()));
}
