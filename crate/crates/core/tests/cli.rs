use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml"))
}

fn normshift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_normshift")).args(args).output().expect("binary runs")
}

fn run(config: &Path, out: &Path, extra: &[&str], verb: &[&str]) -> Output {
    let mut args = vec!["--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    args.extend_from_slice(verb);
    normshift(&args)
}

fn report(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn passing_scenario_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&scenario("speed_law"), dir.path(), &[], &["section", "check"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    assert_eq!(r["passed"], true);
    assert_eq!(r["command"], "section check");
    assert!(dir.path().join("meta.json").exists());
}

#[test]
fn incompatible_section_exits_one_and_names_the_pair() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&scenario("incompatible_section"), dir.path(), &[], &["section", "check"]);
    assert_eq!(out.status.code(), Some(1));
    let r = report(dir.path());
    assert_eq!(r["passed"], false);
    let failed: Vec<&serde_json::Value> = r["checks"].as_array().unwrap().iter().filter(|c| c["passed"] == false).collect();
    assert!(failed.iter().any(|c| c["message"].as_str().unwrap().contains("(i, j) = (1, 2)")), "{failed:?}");
}

#[test]
fn empty_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("empty.toml");
    std::fs::write(&config, "").unwrap();
    let out = run(&config, &dir.path().join("out"), &[], &["scenario", "run"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("version") && stderr.contains("chart") && stderr.contains("generator"), "{stderr}");
}

#[test]
fn unknown_key_and_bad_version_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let base = std::fs::read_to_string(scenario("speed_law")).unwrap();
    for (label, text) in [
        ("version", base.replacen("version = 1", "version = 2", 1)),
        ("unknown", format!("{base}\n[extra]\nkey = 1\n")),
    ] {
        let config = dir.path().join(format!("{label}.toml"));
        std::fs::write(&config, text).unwrap();
        let out = run(&config, &dir.path().join(label), &[], &["section", "check"]);
        assert_eq!(out.status.code(), Some(2), "{label}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn missing_file_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&dir.path().join("absent.toml"), dir.path(), &[], &["section", "check"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn reports_are_reproducible_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let config = scenario("speed_law");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    for (out, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        let o = run(&config, out, &["--seed", seed], &["round-trip"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let read = |p: &Path| std::fs::read(p.join("report.json")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn threshold_scale_tightens_upper_bounds_only() {
    let dir = tempfile::tempdir().unwrap();
    let config = scenario("speed_law");
    let tight = dir.path().join("tight");
    let out = run(&config, &tight, &["--threshold-scale", "1e-20"], &["section", "check"]);
    let r = report(&tight);
    let checks = r["checks"].as_array().unwrap();
    for c in checks {
        assert!(c["threshold"].as_f64().unwrap() <= 1e-20 || c["bound"] == "above", "{c}");
    }
    // Residuals at exact zero still pass any positive bound; otherwise the run fails.
    let all_zero = checks.iter().all(|c| c["value"].as_f64().unwrap() == 0.0);
    assert_eq!(out.status.code(), Some(if all_zero { 0 } else { 1 }));

    let bad = run(&config, &dir.path().join("bad"), &["--threshold-scale", "-1"], &["section", "check"]);
    assert_eq!(bad.status.code(), Some(2));
}
