use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dycalc"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_vec_pretty(v).unwrap()).unwrap();
    p
}

fn report(out: &Path) -> Value {
    serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn haar_roundtrip_passes() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = run(&configs().join("haar-roundtrip.json"), &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["pass"], true);
    assert!(out.join("roundtrip.csv").exists());
    assert!(out.join("timing.json").exists());
}

#[test]
fn zero_kernel_gives_zero_manifest() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = run(&configs().join("decompose-zero.json"), &out, &[]);
    assert_eq!(o.status.code(), Some(0));
    let m: Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert!(m["terms"].as_array().unwrap().is_empty());
    assert!(m["top"]["data"].as_array().unwrap().iter().all(|x| x.as_f64() == Some(0.0)));
    assert!(m["remainder"].as_array().unwrap().iter().all(|x| x.as_f64() == Some(0.0)));
    for p in m["paraproducts"].as_array().unwrap() {
        let frame: Value = serde_json::from_slice(&fs::read(out.join(p.as_str().unwrap())).unwrap()).unwrap();
        assert!(frame["coefficients"].as_array().unwrap().is_empty());
    }
}

#[test]
fn malformed_config_exits_2_without_output() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    for (i, v) in [
        json!({"command": "no-such-command", "seed": 0, "params": {}}),
        json!({"command": "haar-roundtrip", "seed": 0, "params": {"grid": {"d": 1, "l_min": 0, "l_max": -2}}}),
        json!({"command": "haar-roundtrip", "seed": 0, "params": {"grid": {"d": 1, "l_min": -2, "l_max": 0}, "bogus": 1}}),
        json!({"command": "rad-norm", "seed": 0, "params": {"space": {"variant": "schatten", "p": 1.0, "n": 2}}}),
    ]
    .iter()
    .enumerate()
    {
        let cfg = write_config(tmp.path(), &format!("bad{i}.json"), v);
        let o = run(&cfg, &out, &[]);
        assert_eq!(o.status.code(), Some(2), "config {i}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.exists(), "config {i} wrote output");
    }
    let cfg = tmp.path().join("garbage.json");
    fs::write(&cfg, "{not json").unwrap();
    assert_eq!(run(&cfg, &out, &[]).status.code(), Some(2));
    assert_eq!(run(&tmp.path().join("missing.json"), &out, &[]).status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    for name in ["decompose.json", "sparse-stopping.json", "bad-probability.json"] {
        let a = tmp.path().join(format!("a-{name}"));
        let b = tmp.path().join(format!("b-{name}"));
        assert_eq!(run(&configs().join(name), &a, &[]).status.code(), Some(0));
        assert_eq!(run(&configs().join(name), &b, &["--threads", "3"]).status.code(), Some(0));
        let files = report(&a)["files"].as_array().unwrap().clone();
        for f in files.iter().map(|f| f.as_str().unwrap()).chain(["report.json"]) {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{name}: {f} differs");
        }
    }
}

#[test]
fn sparse_form_csv_has_one_row_per_cube() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    assert_eq!(run(&configs().join("sparse-form.json"), &out, &[]).status.code(), Some(0));
    let cubes = report(&out)["metrics"]["cubes"].as_u64().unwrap() as usize;
    assert!(cubes > 1);
    let mut rdr = csv::Reader::from_path(out.join("sparse_form.csv")).unwrap();
    let header = rdr.headers().unwrap().clone();
    assert_eq!(&header[0], "level");
    assert_eq!(header.iter().next_back(), Some("term"));
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), cubes);
    let total: f64 = rows.iter().map(|r| r[header.len() - 1].parse::<f64>().unwrap()).sum();
    let form = report(&out)["metrics"]["sparse_form"].as_f64().unwrap();
    assert!((total - form).abs() <= 1e-12 * form.abs().max(1.0));
}

#[test]
fn echoed_config_reproduces_the_run() {
    let tmp = TempDir::new().unwrap();
    for name in ["haar-roundtrip.json", "rhat-bound.json", "lift-check.json"] {
        let a = tmp.path().join(format!("a-{name}"));
        let b = tmp.path().join(format!("b-{name}"));
        assert_eq!(run(&configs().join(name), &a, &[]).status.code(), Some(0));
        let echo = report(&a)["config"].clone();
        let cfg = write_config(tmp.path(), &format!("echo-{name}"), &echo);
        assert_eq!(run(&cfg, &b, &[]).status.code(), Some(0));
        assert_eq!(fs::read(a.join("report.json")).unwrap(), fs::read(b.join("report.json")).unwrap(), "{name}");
    }
}

#[test]
fn tolerance_failure_exits_1_and_names_metric() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(
        tmp.path(),
        "strict.json",
        &json!({"command": "haar-roundtrip", "seed": 1,
                "params": {"grid": {"d": 1, "l_min": -3, "l_max": 0}, "samples": 2, "tolerance": -1.0}}),
    );
    let o = run(&cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("roundtrip_residual"), "{stderr}");
    let r = report(&out);
    assert_eq!(r["pass"], false);
    assert!(out.join("roundtrip.csv").exists());
}

#[test]
fn verify_consumes_decompose_manifest() {
    let tmp = TempDir::new().unwrap();
    let dec = tmp.path().join("dec");
    assert_eq!(run(&configs().join("decompose.json"), &dec, &[]).status.code(), Some(0));
    let cfg = write_config(
        tmp.path(),
        "verify.json",
        &json!({"command": "verify-representation", "seed": 4,
                "params": {"manifest": "dec/manifest.json", "tuples": 3}}),
    );
    let out = tmp.path().join("ver");
    let o = run(&cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["pass"], true);
    assert!(r["metrics"]["reconstruction"].as_f64().unwrap() <= 1e-8);

    let both = write_config(
        tmp.path(),
        "both.json",
        &json!({"command": "verify-representation", "seed": 4,
                "params": {"manifest": "dec/manifest.json", "grid": {"d": 1, "l_min": -1, "l_max": 0}}}),
    );
    assert_eq!(run(&both, &tmp.path().join("none"), &[]).status.code(), Some(2));
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    let cfg = configs().join("haar-roundtrip.json");
    assert_eq!(run(&cfg, &a, &["--seed", "99"]).status.code(), Some(0));
    assert_eq!(run(&cfg, &b, &[]).status.code(), Some(0));
    assert_eq!(run(&cfg, &c, &["--seed", "99"]).status.code(), Some(0));
    assert_eq!(report(&a)["config"]["seed"], 99);
    assert_ne!(fs::read(a.join("roundtrip.csv")).unwrap(), fs::read(b.join("roundtrip.csv")).unwrap());
    assert_eq!(fs::read(a.join("roundtrip.csv")).unwrap(), fs::read(c.join("roundtrip.csv")).unwrap());
}
