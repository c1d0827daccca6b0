//! Exit-code and output contract of the binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lipinvert")).args(args).arg("--out").arg(out).arg("--no-timestamp").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn certify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = run(&["certify", "--map", "sin-perturbed-identity", "--seed", "1"], dir.path());
    assert_eq!(ok.status.code(), Some(0));
    let json = fs::read_to_string(dir.path().join("certificate.json")).unwrap();
    assert!(json.contains(r#""theorem_tags":["Thm 6.1","Cor 6.7"]"#), "{json}");
    assert!(fs::read_to_string(dir.path().join("profile.csv")).unwrap().starts_with("rho,inf_index\n"));

    let bad = run(&["certify", "--map", "abs-kink", "--seed", "1"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
    assert!(stdout(&bad).contains("zero_index_point = [0.0]"));

    assert_eq!(run(&["certify", "--map", "abs-kink"], dir.path()).status.code(), Some(1));
    assert_eq!(run(&["certify", "--map", "no-such-map", "--seed", "1"], dir.path()).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"], dir.path()).status.code(), Some(1));
}

#[test]
fn invert_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["invert", "--map", "identity:2", "--target", "1,2", "--seed", "3"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("x = (1, 2)"), "{}", stdout(&o));

    let o = run(&["invert", "--map", "sin-perturbed-identity", "--target", "100", "--seed", "3"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let line = stdout(&o).lines().next().unwrap().to_string();
    let x: f64 = line.trim_start_matches("x = (").trim_end_matches(')').parse().unwrap();
    assert!((x + 0.5 * x.sin() - 100.0).abs() <= 1e-8);

    let o = run(&["invert", "--map", "cube", "--target=-1", "--x0", "1", "--seed", "3"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,x1,step,newton_iters,index_estimate\n"));
    assert!(trace.lines().count() > 2);
}

#[test]
fn radius_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["radius", "--map", "sin-perturbed-identity", "--r", "6.283185307179586", "--seed", "5"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("radius.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert!(row[1].parse::<f64>().unwrap() >= std::f64::consts::PI);
    assert_eq!(row[2], "certified");

    let o = run(&["radius", "--map", "identity:1", "--r", "1", "--seed", "5"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("radius.csv")).unwrap();
    let rho: f64 = csv.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((rho - 1.0).abs() < 1e-9, "{rho}");

    let o = run(&["radius", "--map", "abs-kink", "--r", "1", "--seed", "5"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(fs::read_to_string(dir.path().join("radius.csv")).unwrap().contains(",refuted"));
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# perturbation run\nmap = identity:1\nkind = perturbation\nperturbation = half-sin\nweight = weight:const:2\nseed = 4\n").unwrap();
    let cfg_s = cfg.to_str().unwrap();
    assert_eq!(run(&["certify", "--config", cfg_s], dir.path()).status.code(), Some(0));
    assert_eq!(run(&["certify", "--config", cfg_s, "--perturbation", "two-sin"], dir.path()).status.code(), Some(2));
    assert_eq!(run(&["certify", "--config", cfg_s, "--set", "bogus=1"], dir.path()).status.code(), Some(1));
    let o = run(&["profile", "--config", cfg_s, "--map", "kink-23", "--set", "shells=4"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 5);
}

#[test]
fn timestamp_only_when_asked() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_lipinvert"))
        .args(["certify", "--map", "identity:1", "--seed", "1", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(fs::read_to_string(dir.path().join("certificate.json")).unwrap().contains("\"timestamp\""));
    run(&["certify", "--map", "identity:1", "--seed", "1"], dir.path());
    assert!(!fs::read_to_string(dir.path().join("certificate.json")).unwrap().contains("\"timestamp\""));
}
