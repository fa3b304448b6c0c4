use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use curvreg::cli::{canonical_json, parse_scenario, run};
use serde_json::Value;

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn curvreg(config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curvreg"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("scenario.json");
    fs::write(&p, text).unwrap();
    p
}

fn listing(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .map(|d| d.map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect())
        .unwrap_or_default();
    v.sort();
    v
}

const SPHERE: &str = r#"{
  "name": "s", "seed": 1,
  "model": {"name": "sphere", "params": {"radius": 1.0}},
  "domain": {"region": {"kind": "full"}, "resolution": 0.4},
  "task": {"kind": "decompose"}
}"#;

#[test]
fn every_example_scenario_parses() {
    for entry in fs::read_dir(scenarios()).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        assert!(parse_scenario(&text).is_ok(), "{}", path.display());
    }
}

#[test]
fn unknown_key_exits_two_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad = SPHERE.replace(r#""kind": "decompose""#, r#""kind": "decompose", "colour": 3"#);
    let o = curvreg(&write_config(dir.path(), &bad), &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&o.stderr);
    assert!(msg.contains("task") && msg.contains("colour"), "{msg}");
    assert!(listing(&out).is_empty());

    let no_seed = SPHERE.replace(r#""seed": 1,"#, "");
    let o = curvreg(&write_config(dir.path(), &no_seed), &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
}

#[test]
fn invalid_parameter_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad = SPHERE.replace(r#""radius": 1.0"#, r#""radius": -1.0"#);
    let o = curvreg(&write_config(dir.path(), &bad), &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&o.stderr);
    assert!(msg.contains("model") && msg.contains("models"), "{msg}");
    assert!(listing(&out).is_empty());
}

#[test]
fn numerical_failure_exits_three_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let text = r#"{
      "name": "h", "seed": 0,
      "model": {"name": "hyperbolic", "params": {"radius": 1.0}},
      "domain": {"region": {"kind": "full"}, "resolution": 0.5},
      "task": {"kind": "radius-field"}
    }"#;
    let o = curvreg(&write_config(dir.path(), text), &out, &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("domain"));
    assert!(listing(&out).is_empty());
}

#[test]
fn outputs_are_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["decompose_product", "radius_warped", "iterate_sphere", "cover_hyperbolic"] {
        let cfg = scenarios().join(format!("{name}.json"));
        let runs: Vec<PathBuf> = [("a", "1"), ("b", "1"), ("c", "4")]
            .iter()
            .map(|(sub, threads)| {
                let out = dir.path().join(name).join(sub);
                let o = curvreg(&cfg, &out, &["--threads", threads]);
                assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));
                out
            })
            .collect();
        let files = listing(&runs[0]);
        assert!(!files.is_empty());
        for other in &runs[1..] {
            assert_eq!(listing(other), files);
            for f in &files {
                assert_eq!(fs::read(runs[0].join(f)).unwrap(), fs::read(other.join(f)).unwrap(), "{name}/{f}");
            }
        }
    }
}

#[test]
fn json_reports_round_trip() {
    let text = fs::read_to_string(scenarios().join("iterate_sphere.json")).unwrap();
    let reports = run(&parse_scenario(&text).unwrap()).unwrap();
    let json = reports.iter().find(|r| r.file.ends_with(".json")).unwrap();
    let value: Value = serde_json::from_slice(&json.bytes).unwrap();
    let again = canonical_json(&value, true).unwrap() + "\n";
    assert_eq!(again.as_bytes(), &json.bytes[..]);
    let limit = value["series"]["weighted_limit"].as_f64().unwrap();
    assert!((limit - 11.0).abs() < 1e-12);
}

#[test]
fn canonical_json_sorts_and_nulls() {
    let v = serde_json::json!({"b": 1.5, "a": [f64::NAN, 2, -3], "c": "x"});
    assert_eq!(canonical_json(&v, false).unwrap(), r#"{"a":[null,2,-3],"b":1.5000000000000000e0,"c":"x"}"#);
    let s = canonical_json(&f64::INFINITY, false).unwrap();
    assert_eq!(s, "null");
}

#[test]
fn empty_scan_still_has_csv_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let text = r#"{
      "name": "empty", "seed": 0,
      "model": {"name": "flat_torus", "params": {}},
      "domain": {"region": {"kind": "point", "coords": [0.5, 0.5, 0.5, 0.5], "cell_volume": 1.0}, "resolution": 1.0},
      "task": {"kind": "iterate", "case": "i", "scale": 1.0, "steps": 0}
    }"#;
    let o = curvreg(&write_config(dir.path(), text), &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("empty.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("i,rho,mu,energy,csc_weyl,residual"));
}

#[test]
fn gauss_bonnet_on_unit_sphere() {
    let text = fs::read_to_string(scenarios().join("gauss_bonnet_sphere.json")).unwrap();
    let reports = run(&parse_scenario(&text).unwrap()).unwrap();
    let v: Value = serde_json::from_slice(&reports[0].bytes).unwrap();
    assert!((v["euler_integral"].as_f64().unwrap() - 2.0).abs() < 1e-6, "{v}");
    assert!(v["signature_integral"].as_f64().unwrap().abs() < 1e-9);
}
