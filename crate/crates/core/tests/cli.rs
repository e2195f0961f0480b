use std::path::Path;
use std::process::{Command, Output};

fn fibercav(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fibercav"))
        .arg("--out")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn unknown_key_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[cavity]\nbogus = 1\n");
    let out = fibercav(dir.path(), &["--config", &cfg, "phonons"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn invalid_value_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[cavity]\nr1 = 1.5\n");
    assert_eq!(fibercav(dir.path(), &["--config", &cfg, "phonons"]).status.code(), Some(2));
    let missing = fibercav(dir.path(), &["fit", "--data", "/nonexistent/data.csv"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn empty_search_region_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    // a lossy oscillator never gets below 100 phonons
    let cfg = write_config(dir.path(), "[optimizer.search]\nq = 10.0\n");
    let out = fibercav(dir.path(), &["--config", &cfg, "cool-search"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no cooling region"));
}

#[test]
fn deterministic_commands_rerun_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let out = fibercav(dir, &["phonons", "--delta-scan", "-1:1:21"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let out = fibercav(dir, &["finesse", "--powers", "10,20", "--forward", "fast"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["phonons.csv", "finesse.csv"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
    let phonons = read(a.path(), "phonons.csv");
    assert!(phonons.starts_with("delta_Hz,n_f,"));
    assert_eq!(phonons.lines().count(), 22);
    assert!(read(a.path(), "finesse.csv").starts_with("P_in_W,"));
}

#[test]
fn manifest_records_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let out = fibercav(dir.path(), &["phonons", "--delta-scan", "0.5"]);
    assert!(out.status.success());
    let manifest: serde_json::Value = serde_json::from_str(&read(dir.path(), "phonons.manifest.json")).unwrap();
    assert_eq!(manifest["command"], "phonons");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["config"]["cavity"]["r1"], 0.85);
}

#[test]
fn stochastic_runs_repeat_with_the_same_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[cavity]\nn_elements = 12\nl_fib = 0.8278146\n[drive.langevin]\nt_total = 2e-4\nrealizations = 2\n",
    );
    let run = |sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = fibercav(&out_dir, &["--config", &cfg, "langevin", "--seed", "5", "--deltas", "0.5"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        read(&out_dir, "langevin.csv")
    };
    let first = run("a");
    assert_eq!(first, run("b"));
    assert!(first.starts_with("delta_Hz,mean_x2_m2,stderr_m2,"));
}
