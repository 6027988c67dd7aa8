use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use crack_repair_cli::ScenarioConfig;
use serde_json::{json, Value};
use tempfile::TempDir;

fn bin(dir: &Path, args: &[&str], config: Option<Value>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_crack-repair"));
    cmd.current_dir(dir).args(args);
    if let Some(cfg) = config {
        let path = dir.join("config.json");
        fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
        cmd.arg("--config").arg(&path);
    }
    cmd.output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn default_config_round_trips() {
    let cfg = ScenarioConfig::default();
    let text = serde_json::to_string_pretty(&cfg).unwrap();
    assert_eq!(ScenarioConfig::from_json(&text).unwrap(), cfg);
    assert_eq!(ScenarioConfig::from_json("{}").unwrap(), cfg);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in fs::read_dir(dir).unwrap() {
        ScenarioConfig::load(&e.unwrap().path()).unwrap();
        n += 1;
    }
    assert!(n >= 2);
}

#[test]
fn unknown_keys_are_rejected() {
    let t = TempDir::new().unwrap();
    let o = bin(t.path(), &["fill"], Some(json!({ "noise": { "laser_sigmaa": 0.1 } })));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("laser_sigmaa"));
}

#[test]
fn single_speed_calibration_exits_2() {
    let t = TempDir::new().unwrap();
    let cfg = json!({ "calibration": { "source": "synthetic", "strips": { "speeds": [10.0] } } });
    let o = bin(t.path(), &["calibrate", "--out", "o"], Some(cfg));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn uncracked_specimen_exits_3() {
    let t = TempDir::new().unwrap();
    let cfg = json!({ "specimen": { "crack": { "path": [[0.0, 0.0], [0.0, 150.0]], "width": 8.0, "depth": 0.05 } } });
    let o = bin(t.path(), &["fill", "--out", "o"], Some(cfg));
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("no crack found"));
}

#[test]
fn missing_calibration_file_exits_2() {
    let t = TempDir::new().unwrap();
    let cfg = json!({ "calibration": { "source": "file", "path": "nope.json" }, "fill_mode": "adaptive" });
    let o = bin(t.path(), &["fill", "--out", "o"], Some(cfg));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn unwritable_output_exits_4() {
    let t = TempDir::new().unwrap();
    fs::write(t.path().join("blocker"), b"").unwrap();
    let o = bin(t.path(), &["scan", "--out", "blocker/sub"], None);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn calibrate_then_fill_from_file() {
    let t = TempDir::new().unwrap();
    let o = bin(t.path(), &["calibrate", "--out", "cal"], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let model: Value = serde_json::from_slice(&fs::read(t.path().join("cal/calibration.json")).unwrap()).unwrap();
    let q = model["Q"].as_f64().unwrap();
    assert!((q - 946.06).abs() < 0.01 * 946.06, "Q = {q}");
    assert_eq!(fs::read_to_string(t.path().join("cal/calibration.csv")).unwrap().lines().count(), 6);

    let cfg = json!({ "calibration": { "source": "file", "path": "cal/calibration.json" } });
    let o = bin(t.path(), &["fill", "--out", "fill"], Some(cfg));
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["waypoints.csv", "heightfield_pre.pgm", "heightfield_post.pgm", "fill_report.csv", "fill_summary.json"] {
        assert!(t.path().join("fill").join(f).exists(), "{f}");
    }
    let summary: Value = serde_json::from_slice(&fs::read(t.path().join("fill/fill_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["mode"], "adaptive");
    assert!(summary["mean"].as_f64().unwrap() <= 0.35);
    let report = fs::read_to_string(t.path().join("fill/fill_report.csv")).unwrap();
    assert_eq!(report.lines().next().unwrap(), "station,A_pre,A_post,eps_fill,speed");
}

#[test]
fn experiment_has_six_rows_with_adaptive_best() {
    let t = TempDir::new().unwrap();
    let o = bin(t.path(), &["experiment", "--out", "o"], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(t.path().join("o/table2.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "Speed (mm/s),Mean,Std. Dev.,Median,Time (s)");
    assert_eq!(lines.len(), 7);
    let mean = |l: &str| l.split(',').nth(1).unwrap().parse::<f64>().unwrap();
    let adaptive = lines.iter().find(|l| l.starts_with("Adaptive")).unwrap();
    assert!(lines[1..].iter().all(|l| mean(adaptive) <= mean(l)));
}

#[test]
fn zero_noise_localization_is_near_zero() {
    let t = TempDir::new().unwrap();
    let cfg = json!({ "noise": { "depth_sigma_fraction": 0.0, "laser_sigma": 0.0 }, "localization_scans": 2 });
    let o = bin(t.path(), &["localize", "--out", "o"], Some(cfg));
    assert!(o.status.success(), "{}", stderr(&o));
    let r: Value = serde_json::from_slice(&fs::read(t.path().join("o/table3.json")).unwrap()).unwrap();
    for axis in ["X", "Y", "Z", "Distance"] {
        assert!(r[axis]["mean"].as_f64().unwrap() < 0.1, "{axis}: {}", r[axis]);
    }
    assert!(r["pairs"].as_u64().unwrap() >= 40);
}

#[test]
fn reruns_and_parallel_runs_are_byte_identical() {
    let t = TempDir::new().unwrap();
    for (out, par) in [("a", "1"), ("b", "1"), ("c", "3")] {
        for cmd in ["experiment", "localize", "scan"] {
            let o = bin(t.path(), &[cmd, "--out", out, "--seed", "11", "--parallel", par], None);
            assert!(o.status.success(), "{}", stderr(&o));
        }
    }
    let a = read_tree(&t.path().join("a"));
    assert!(a.len() > 10);
    assert_eq!(a, read_tree(&t.path().join("b")));
    assert_eq!(a, read_tree(&t.path().join("c")));
}

#[test]
fn seed_changes_noisy_outputs() {
    let t = TempDir::new().unwrap();
    for (out, seed) in [("a", "1"), ("b", "2")] {
        assert!(bin(t.path(), &["localize", "--out", out, "--seed", seed], None).status.success());
    }
    assert_ne!(read_tree(&t.path().join("a")), read_tree(&t.path().join("b")));
}

#[test]
fn outputs_stay_under_the_output_directory() {
    let t = TempDir::new().unwrap();
    let o = bin(t.path(), &["scan", "--out", "o"], None);
    assert!(o.status.success());
    let listed = String::from_utf8(o.stdout).unwrap();
    assert!(listed.lines().count() > 5);
    assert!(listed.lines().all(|l| Path::new(l).starts_with("o")));
    let top: Vec<_> = fs::read_dir(t.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(top, vec!["o"]);
}
