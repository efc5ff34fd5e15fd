use std::path::Path;
use std::process::{Command, Output};

fn scbm(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("run.ini");
    std::fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_scbm"))
        .args(args)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

#[test]
fn unknown_key_exits_with_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = scbm(dir.path(), "[branching]\ngama = 2\n", &["csbp-check"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("gama"), "{err}");
}

#[test]
fn negative_gamma_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = scbm(dir.path(), "[branching]\ngamma = -1\n", &["survival"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn minimal_config_writes_csv_with_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = scbm(
        dir.path(),
        "[duality]\nsystems = 1x2\nradius = 4\n",
        &["verify-duality", "--seed", "5"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/verify-duality.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("experiment,seed,replica_or_index,param_name,param_value,horizon_or_n,value,stderr,flag")
    );
    assert!(lines.next().unwrap().starts_with("generator_duality,5,0,system,1x2,"));
}

#[test]
fn failed_check_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    // far too few replicas for the negative control to separate
    let cfg = "[scbm]\nchecks = negative_control\nnegative_replicas = 20\nmax_step = 0.05\n";
    let out = scbm(dir.path(), cfg, &["scbm-duality"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stdout));
}
