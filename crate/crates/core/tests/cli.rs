use std::fs;
use std::process::{Command, Output};

fn afgame(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_afgame")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn riccati_output_is_stable_and_tagged() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = afgame(&["solve-riccati", "--out", d.to_str().unwrap(), "--seed", "5"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (ta, tb) = (fs::read(a.join("riccati.csv")).unwrap(), fs::read(b.join("riccati.csv")).unwrap());
    assert_eq!(ta, tb);
    let text = String::from_utf8(ta).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("# config_sha256=") && header.ends_with(" seed=5"), "{header}");
    assert_eq!(lines.next().unwrap(), "t,theta_a_11,theta_a_12,theta_a_22,theta_b_11,theta_b_12,theta_b_22");
    assert_eq!(text.lines().count(), 2 + 101);
}

#[test]
fn steps_flag_changes_grid() {
    let dir = tempfile::tempdir().unwrap();
    let o = afgame(&["baseline", "--steps", "40", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(dir.path().join("baseline.csv")).unwrap();
    assert_eq!(text.lines().count(), 2 + 41);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"af": {"alpha": -1}}"#).unwrap();
    let o = afgame(&["fisher", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("alpha"));
    assert_eq!(code(&afgame(&["fisher", "--config", "/nonexistent.json"])), 2);
    assert_eq!(code(&afgame(&["baseline", "--steps", "0"])), 2);
    let wrong = dir.path().join("wrong.json");
    fs::write(&wrong, r#"{"experiment": "fig3"}"#).unwrap();
    assert_eq!(code(&afgame(&["experiment", "fig2", "--config", wrong.to_str().unwrap()])), 2);
}

#[test]
fn numerical_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = afgame(&["af-optimize", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("non-finite"));
}

#[test]
fn af_and_detect_with_dump_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("af.json");
    fs::write(&cfg, r#"{"af": {"q_af": 10.0, "lam_af": 1.0}}"#).unwrap();
    let out = dir.path().join("out");
    let (c, o) = (cfg.to_str().unwrap(), out.to_str().unwrap());
    let r = afgame(&["af-optimize", "--config", c, "--out", o, "--dump", "--paths", "500"]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    for f in ["af.csv", "af_history.csv", "af_summary.csv", "af_paths.bin"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let dump = out.join("af_paths.bin");
    let r = afgame(&["detect", "--config", c, "--play", "af", "--input", dump.to_str().unwrap(), "--out", o]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let text = fs::read_to_string(out.join("detect_af.csv")).unwrap();
    assert_eq!(text.lines().nth(1).unwrap(), "t,alpha1,alpha2,se1,se2,target1,target2");
    let r = afgame(&["detect", "--input", "/nonexistent.bin"]);
    assert_eq!(code(&r), 2);
}

#[test]
fn validate_passes_and_catches_fault() {
    let dir = tempfile::tempdir().unwrap();
    let o = afgame(&["validate", "--out", dir.path().to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{stdout}");
    assert!(stdout.lines().all(|l| l.starts_with("PASS")));
    assert!(dir.path().join("validate.csv").exists());
    let o = afgame(&["validate", "--inject-fault"]);
    assert_eq!(code(&o), 1);
    let stdout = String::from_utf8_lossy(&o.stdout);
    let failing: Vec<_> = stdout.lines().filter(|l| l.starts_with("FAIL")).collect();
    assert_eq!(failing.len(), 1);
    assert!(failing[0].contains("coupling_sensitivities"));
}
