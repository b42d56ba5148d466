use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use teleop_core::harness::{read_log, write_log, ScenarioConfig};
use teleop_core::scenarios::EyehandConfig;
use teleop_core::se3::{Pose, Vec3};
use teleop_core::session::LogRecord;
use teleop_service::ServiceConfig;

fn teleop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_teleop"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn shipped_configs_are_the_defaults() {
    for (kind, extra, file) in [
        ("scenario", Some("a"), "configs/scenario_a.json"),
        ("scenario", Some("b"), "configs/scenario_b.json"),
        ("eyehand", None, "configs/eyehand.json"),
        ("service", None, "configs/service.json"),
    ] {
        let mut args = vec!["gen-config", kind];
        if let Some(s) = extra {
            args.extend(["--scenario", s]);
        }
        let out = teleop(&args);
        assert!(out.status.success());
        let shipped: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(repo_file(file)).unwrap()).unwrap();
        let generated: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
        assert_eq!(shipped, generated, "{file} is out of date");
    }
    let text = std::fs::read_to_string(repo_file("configs/scenario_b.json")).unwrap();
    serde_json::from_str::<ScenarioConfig>(&text).unwrap().validate().unwrap();
    let text = std::fs::read_to_string(repo_file("configs/eyehand.json")).unwrap();
    serde_json::from_str::<EyehandConfig>(&text).unwrap().validate().unwrap();
    let text = std::fs::read_to_string(repo_file("configs/service.json")).unwrap();
    serde_json::from_str::<ServiceConfig>(&text).unwrap().validate().unwrap();
}

#[test]
fn run_writes_a_log() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(repo_file("configs/scenario_b.json")).unwrap();
    let mut cfg: ScenarioConfig = serde_json::from_str(&text).unwrap();
    cfg.duration = 2.0;
    cfg.name = "short".into();
    let path = dir.path().join("short.json");
    std::fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let out_dir = dir.path().join("out");
    let out = teleop(&["run", "--config", path.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let log = read_log(&out_dir.join("short.jsonl")).unwrap();
    assert_eq!(log.len(), 250);
}

#[test]
fn config_errors_exit_2_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"scenario":"A","duration":1,"seed":0,"session":{"world":{"surfaces":[{"geometry":{"type":"cube"},"stiffness":1,"damping":0}]}},"script":{"waypoints":[]}}"#).unwrap();
    let out = teleop(&["run", "--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("session.world.surfaces[0].geometry"), "{}", stderr(&out));

    std::fs::write(&path, r#"{"scenario":"A","duration":1,"seed":0,"script":{"waypoints":[]}}"#).unwrap();
    let out = teleop(&["run", "--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("script"), "{}", stderr(&out));

    let out = teleop(&["eyehand", "--config", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = teleop(&["stats", "--logs", "x", "y", "--bstep", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

fn synthetic_log(path: &Path, slope: f64) {
    let records: Vec<LogRecord> = (0..20_000u64)
        .map(|k| {
            let b = (k % 7000) as f64 * 1e-6;
            let wobble = ((k * 7919) % 101) as f64 / 100.0 - 0.5;
            LogRecord {
                tick: k,
                t: k as f64 * 0.008,
                a: slope * b + 0.1 * wobble,
                b,
                stylus: None,
                desired: Pose::identity(),
                commanded: Pose::identity(),
                measured: Pose::identity(),
                phi: 0.0,
                stale: false,
                clamped: false,
                emergency: false,
                force: Vec3::zeros(),
                feedback: Vec3::zeros(),
                tracking_error: Vec3::zeros(),
            }
        })
        .collect();
    write_log(path, &records).unwrap();
}

#[test]
fn stats_report_and_direction_check() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    synthetic_log(&a, 1000.0);
    synthetic_log(&b, 600.0);
    let out_dir = dir.path().join("stats");
    let out = teleop(&[
        "stats", "--logs", a.to_str().unwrap(), b.to_str().unwrap(),
        "--bmin", "0", "--bmax", "0.007", "--bstep", "0.0001",
        "--out", out_dir.to_str().unwrap(), "--check",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["comparison"]["bins"].as_array().unwrap().len(), 70);
    assert!(report["comparison"]["welch"]["t"].as_f64().unwrap() < 0.0);
    let csv = std::fs::read_to_string(out_dir.join("bins.csv")).unwrap();
    assert_eq!(csv.lines().count(), 71);
    assert!(csv.starts_with("center,count_a,mean_a,variance_a,count_b,mean_b,variance_b,compared"));

    let out = teleop(&["stats", "--logs", b.to_str().unwrap(), a.to_str().unwrap(), "--check"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("assertion failed"));
}

#[test]
fn eyehand_passes_and_fails_by_exit_code() {
    let out = teleop(&["eyehand", "--config", repo_file("configs/eyehand.json").to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["phases"][2]["dominant_axis"], 2);

    // Without the roll the last phase keeps moving along x.
    let mut cfg = EyehandConfig::default();
    cfg.roll = 0.0;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("eyehand.json");
    std::fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let out = teleop(&["eyehand", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn serve_records_a_session() {
    let dir = tempfile::tempdir().unwrap();
    let out = teleop(&[
        "serve", "--config", repo_file("configs/service.json").to_str().unwrap(),
        "--port", "0", "--ticks", "40", "--record", dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("40 ticks"));
    assert!(dir.path().join("log.jsonl").exists());
    assert!(dir.path().join("inputs.jsonl").exists());
}
