use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rppg::estimate::{load_external_predictions, ChunkConfig, Method};
use rppg::io::read_clip;
use rppg::pipeline::estimate_clip;
use serde_json::Value;
use tempfile::TempDir;

fn rppg(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rppg"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("run rppg")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = rppg(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn agg(r: &Value, key: &str) -> f64 {
    r["aggregate"][key]["mean"].as_f64().unwrap()
}

#[test]
fn full_chain_on_synthetic_sessions() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(&["synth", "--out", "ds", "--sessions", "5", "--hr", "60,70,80,90,100", "--duration", "40"], d);
    ok(&["preprocess", "--dataset", "ds", "--out", "clips"], d);
    ok(&["estimate", "--clips", "clips", "--out", "preds", "--method", "green"], d);

    ok(&["evaluate", "--dataset", "ds", "--predictions", "preds", "--variant", "w10", "--out", "r10", "--svg", "--jobs", "1"], d);
    let r10 = report(&d.join("r10"));
    assert_eq!(r10["sessions"].as_array().unwrap().len(), 5);
    assert!(agg(&r10, "mae") < 2.0);
    assert_eq!(r10["config"]["params"]["variant"], "w10");
    assert!(fs::read_to_string(d.join("r10/box_plot.svg")).unwrap().contains("<svg"));
    let csv = fs::read_to_string(d.join("r10/report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5 + 2);

    // worker count never changes report bytes
    let files = ["report.json", "report.csv", "box_plot.svg"];
    let before: Vec<String> = files.iter().map(|f| fs::read_to_string(d.join("r10").join(f)).unwrap()).collect();
    ok(&["evaluate", "--dataset", "ds", "--predictions", "preds", "--variant", "w10", "--out", "r10", "--svg", "--jobs", "4"], d);
    for (f, b) in files.iter().zip(&before) {
        assert_eq!(&fs::read_to_string(d.join("r10").join(f)).unwrap(), b, "{f}");
    }

    ok(&["evaluate", "--dataset", "ds", "--predictions", "preds", "--variant", "wfull", "--out", "rfull"], d);
    let rfull = report(&d.join("rfull"));
    assert!(agg(&rfull, "mae") < 0.5);
    for s in rfull["sessions"].as_array().unwrap() {
        assert_eq!(s["n_windows"], 1);
    }

    let stats: Value = serde_json::from_str(&ok(&["stats", "--dataset", "ds"], d)).unwrap();
    assert_eq!(stats["dataset"]["sessions"], 5);
    assert!((stats["dataset"]["mean_hr"]["mean"].as_f64().unwrap() - 80.0).abs() < 0.1);

    // predictions written by the CLI reload identically
    let (file, warnings) = load_external_predictions(&d.join("preds/s02.json")).unwrap();
    assert!(warnings.is_empty());
    let again = estimate_clip(&read_clip(&d.join("clips/s02.rppg")).unwrap(), Method::Green, &ChunkConfig::default()).unwrap();
    assert_eq!(file, again);

    let out = ok(&["augment", "--manifest", "ds/s00.json", "--clip", "clips/s00.rppg", "--target-hr", "120", "--out", "aug"], d);
    assert!(out.contains("L=272"), "{out}");
    let prov: Value = serde_json::from_str(&fs::read_to_string(d.join("aug/s00_aug.provenance.json")).unwrap()).unwrap();
    assert_eq!(prov["L"], 272);
    assert_eq!(read_clip(&d.join("aug/s00_aug.rppg")).unwrap().len(), 136);

    // a missing session fails the run unless --keep-going
    fs::remove_file(d.join("preds/s03.json")).unwrap();
    let out = rppg(&["evaluate", "--dataset", "ds", "--predictions", "preds", "--out", "rk"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("s03"));
    ok(&["evaluate", "--dataset", "ds", "--predictions", "preds", "--out", "rk", "--keep-going"], d);
    assert_eq!(report(&d.join("rk"))["sessions"].as_array().unwrap().len(), 4);
}

#[test]
fn synth_is_byte_reproducible() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    for out in ["a", "b"] {
        ok(&["synth", "--out", out, "--sessions", "2", "--duration", "3", "--size", "16", "--seed", "9"], d);
    }
    for f in ["s00.json", "s01/gt.csv", "s01/landmarks.json", "s01/frames/000042.png"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn validation_errors_exit_with_1() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let out = rppg(&["synth", "--out", "x", "--hr", "200"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("40"));

    fs::create_dir(d.join("empty")).unwrap();
    let out = rppg(&["evaluate", "--dataset", "empty", "--predictions", "empty", "--out", "r"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no sessions"));

    let out = rppg(&["evaluate", "--variant", "w20"], d);
    assert_eq!(out.status.code(), Some(1));
}
