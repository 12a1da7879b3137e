use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spheremorse"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn census_report_matches_the_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"kind": "census", "m": 3, "ambient_range": [5, 9]}"#);
    let out = dir.path().join("out");
    let o = run(&["census", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(&out);
    assert_eq!(r["passed"], true);
    assert_eq!(r["results"]["counts_N5"]["value"], serde_json::json!([1, 1, 2, 2, 2, 1, 1]));
    for n in 5..=9 {
        assert_eq!(r["results"][format!("oracle_match_N{n}")]["value"], true);
    }
    assert!(r["checks"].as_array().unwrap().iter().all(|c| c["anchor"].is_string()));
    let csv = std::fs::read_to_string(out.join("census_m3_N7.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("k,count"));
    assert_eq!(csv.lines().count(), 3 * 4 + 2);
    assert!(out.join("spectra.csv").exists() && out.join("telemetry.csv").exists());
}

#[test]
fn reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut texts = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        let o = run(&["flow", "--level", "2", "--seed", "4", "--out", out.to_str().unwrap()]);
        assert!(o.status.code() == Some(0) || o.status.code() == Some(2), "{}", stderr(&o));
        let mut r = report(&out);
        r.as_object_mut().unwrap().remove("timestamp_unix");
        texts.push(serde_json::to_string(&r).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
    let r: Value = serde_json::from_str(&texts[0]).unwrap();
    assert_eq!(r["config"]["seeds"], serde_json::json!([4]));
    assert_eq!(r["config"]["level"], 2);
}

#[test]
fn flow_run_writes_telemetry_and_meshes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "f.json",
        r#"{"kind": "flow", "level": 3, "n": 4, "alpha_schedule": [1.1, 1.05], "seeds": [1], "write_obj": true}"#,
    );
    let out = dir.path().join("out");
    let o = run(&["flow", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let r = report(&out);
    assert!(r["results"]["seed1_harmonic_residual"]["value"].as_f64().unwrap() > 0.0);
    let telemetry = std::fs::read_to_string(out.join("telemetry.csv")).unwrap();
    assert!(telemetry.lines().filter(|l| l.starts_with("seed1_stage")).count() > 5);
    let obj = std::fs::read_to_string(out.join("mesh.obj")).unwrap();
    assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 642);
    assert!(out.join("image_seed1.obj").exists());
}

#[test]
fn spectrum_index_of_the_equator() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.json", r#"{"kind": "spectrum", "n": 4, "level": 4}"#);
    let out = dir.path().join("out");
    let o = run(&["spectrum", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(&out);
    assert_eq!(r["results"]["index"]["value"], 2);
    let spectra = std::fs::read_to_string(out.join("spectra.csv")).unwrap();
    assert_eq!(spectra.lines().filter(|l| l.ends_with(",negative")).count(), 2);
}

#[test]
fn double_cover_first_eigenvalue() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cv.json", r#"{"kind": "covers", "n": 4, "level": 4, "degree": 2}"#);
    let out = dir.path().join("out");
    let o = run(&["covers", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(&out);
    assert!(r["results"]["lambda1"]["value"].as_f64().unwrap() <= 1.05);
    assert!(r["results"]["normal_index"]["value"].as_u64().unwrap() >= 4);
}

#[test]
fn pinch_and_morse_defaults_pass() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.json", r#"{"kind": "pinch", "n": 4, "delta": 0.5, "samples": 5000, "seeds": [0, 1]}"#);
    let o = run(&["pinch", "--config", &cfg, "--out", dir.path().join("p").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(&dir.path().join("p"));
    assert_eq!(r["results"]["mixture_seed1_report"]["value"]["violations"], 0);
    for n in 4..=8 {
        let out = dir.path().join(format!("m{n}"));
        let cfg = write(dir.path(), "m.json", &format!(r#"{{"kind": "morse", "n": {n}}}"#));
        let o = run(&["morse", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
}

#[test]
fn inconsistent_complexes_are_numeric_failures() {
    let dir = tempfile::tempdir().unwrap();
    let square = r#"{"kind": "morse", "complex": {
        "generators": [{"id": "p", "degree": 0, "label": "A"}, {"id": "q", "degree": 1, "label": "A"}, {"id": "r", "degree": 2, "label": "A"}],
        "boundaries": [{"from": "r", "to": "q", "count_mod2": 1}, {"from": "q", "to": "p", "count_mod2": 1}]}}"#;
    let cfg = write(dir.path(), "sq.json", square);
    let o = run(&["morse", "--config", &cfg, "--out", dir.path().join("a").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("topology"));

    let violation = r#"{"kind": "morse", "complex": {
        "generators": [{"id": "a", "degree": 1, "label": "A"}, {"id": "b", "degree": 0, "label": "B"}],
        "boundaries": [{"from": "a", "to": "b", "count_mod2": 1}]}}"#;
    let cfg = write(dir.path(), "v.json", violation);
    let o = run(&["morse", "--config", &cfg, "--out", dir.path().join("b").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("B component"));
}

#[test]
fn failing_checks_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "f.json",
        r#"{"kind": "flow", "level": 2, "n": 4, "alpha_schedule": [1.1], "tolerances": {"energy_rel": 1e-9}}"#,
    );
    let out = dir.path().join("out");
    let o = run(&["flow", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(report(&out)["passed"], false);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL seed0_energy_gap"));
}

#[test]
fn validate_accepts_and_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "good.json", r#"{"kind": "flow", "level": 3, "n": 4, "alpha_schedule": [1.2, 1.1]}"#);
    let o = run(&["validate", "--config", &good]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("OK"));

    let missing = write(dir.path(), "missing.json", "{\n  \"kind\": \"flow\",\n  \"level\": 3,\n  \"n\": 4\n}");
    let o = run(&["validate", "--config", &missing]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("alpha_schedule"));

    let negative = write(dir.path(), "neg.json", "{\n  \"kind\": \"spectrum\",\n  \"level\": -1,\n  \"n\": 4\n}");
    let o = run(&["validate", "--config", &negative]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("line 3: field `level`"), "{}", stderr(&o));

    let several = write(dir.path(), "several.json", r#"{"kind": "covers", "n": 1, "level": 9, "colour": 2}"#);
    let o = run(&["validate", "--config", &several]);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert!(err.contains("colour"), "{err}");

    let several = write(dir.path(), "several2.json", r#"{"kind": "covers", "n": 1, "level": 9}"#);
    let err = stderr(&run(&["validate", "--config", &several]));
    for field in ["`n`", "`level`", "`degree`"] {
        assert!(err.contains(field), "{field} in {err}");
    }

    let syntax = write(dir.path(), "syntax.json", "{\n  \"kind\": \"census\",\n  \"m\": 3,,\n}");
    let o = run(&["validate", "--config", &syntax]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let census = write(dir.path(), "c.json", r#"{"kind": "census", "ambient_range": [5, 9]}"#);
    let o = run(&["flow", "--config", &census]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("not flow"));
    let o = run(&["spectrum", "--level", "9", "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!dir.path().join("x").exists());
}
