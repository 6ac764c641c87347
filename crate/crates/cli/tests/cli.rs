//! The `sentinel` binary as a shell harness would drive it.

use sentinel_cli::log::{parse_log, read_log};
use std::path::Path;
use std::process::{Command, Output};

fn sentinel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sentinel")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn only_log(dir: &Path) -> std::path::PathBuf {
    let mut logs: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "ndjson"))
        .collect();
    assert_eq!(logs.len(), 1, "{logs:?}");
    logs.pop().unwrap()
}

#[test]
fn clear_road_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = sentinel(&["run", "--scenario", "straight_road_clear", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let log = read_log(&only_log(dir.path())).unwrap();
    assert!(log.summary.collisions.is_empty());
    assert!(log.ticks.iter().all(|t| t.collisions.is_empty()));
    assert_eq!(log.ticks.len() as u64, log.summary.ticks);
    assert_eq!(log.header.config.llm, "mock-rubric-v1");
}

#[test]
fn rear_end_exits_two_with_one_failure_box() {
    let dir = tempfile::tempdir().unwrap();
    let o = sentinel(&["run", "--scenario", "scripted_rear_end", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let log = read_log(&only_log(dir.path())).unwrap();
    assert_eq!(log.summary.committed.len(), 1);
    assert_eq!(format!("{:?}", log.summary.committed[0].outcome), "Failure");
    assert_eq!(log.ticks.last().unwrap().collisions.len(), 1);
}

#[test]
fn out_of_range_flags_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for args in [["--threshold", "1.1"], ["--threshold", "-0.2"], ["--renewal-rate", "1.5"]] {
        let o = sentinel(&["run", args[0], args[1], "--out", out]);
        assert_eq!(o.status.code(), Some(1));
        assert!(stderr(&o).contains("config error"), "{}", stderr(&o));
    }
    let o = sentinel(&["run", "--llm", "carrier-pigeon", "--out", out]);
    assert_eq!(o.status.code(), Some(2), "clap usage errors exit 2");
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none(), "nothing written");
}

#[test]
fn same_config_same_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = sentinel(&["run", "--scenario", "occlusion_t_junction", "--seed", "5", "--out", d.path().to_str().unwrap()]);
        assert!(o.status.code().is_some_and(|c| c == 0 || c == 2));
    }
    let (la, lb) = (only_log(a.path()), only_log(b.path()));
    assert_eq!(std::fs::read(&la).unwrap(), std::fs::read(&lb).unwrap());
    let c = tempfile::tempdir().unwrap();
    sentinel(&["run", "--scenario", "occlusion_t_junction", "--seed", "6", "--out", c.path().to_str().unwrap()]);
    assert_ne!(std::fs::read(&la).unwrap(), std::fs::read(only_log(c.path())).unwrap());
}

#[test]
fn scenario_files_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mine.json");
    let doc = sentinel_core::scenarios::bundled("straight_road_clear").unwrap().to_document();
    std::fs::write(&path, doc).unwrap();
    let out = dir.path().join("out");
    let o = sentinel(&["run", "--scenario", path.to_str().unwrap(), "--level", "high", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let log = read_log(&only_log(&out)).unwrap();
    assert_eq!(log.header.config.level, "high");
    assert_eq!(log.header.config.scenario, path.to_str().unwrap());
}

#[test]
fn noiseless_log_scores_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = sentinel(&["run", "--scenario", "straight_road_clear", "--noiseless", "--out", out]);
    assert_eq!(o.status.code(), Some(0));
    let log = only_log(dir.path());
    let o = sentinel(&["eval", "--mode", "perception", log.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("perception_report.json")).unwrap()).unwrap();
    assert!((report["map"].as_f64().unwrap() - 1.0).abs() < 1e-12, "{report}");
    for row in report["tp"]["rows"].as_array().unwrap() {
        if let Some(e) = row["errors"].as_object() {
            assert!(e["mate"].as_f64().unwrap() < 1e-4, "{row}");
        }
    }
}

#[test]
fn missing_log_names_the_path() {
    let o = sentinel(&["eval", "--mode", "perception", "/definitely/not/here.ndjson"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("io error") && err.contains("/definitely/not/here.ndjson"), "{err}");
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    sentinel(&["run", "--scenario", "scripted_rear_end", "--out", out]);
    let log = only_log(dir.path());
    let ok = sentinel(&["validate", "--scenario", "straight_road_clear", log.to_str().unwrap()]);
    assert_eq!(ok.status.code(), Some(0));

    let text = std::fs::read_to_string(&log).unwrap();
    let broken = dir.path().join("broken.ndjson");
    std::fs::write(&broken, text.replacen("\"tick\":3,", "\"tick\":4,", 1)).unwrap();
    assert!(parse_log(&std::fs::read_to_string(&broken).unwrap()).is_err());
    assert_eq!(sentinel(&["validate", broken.to_str().unwrap()]).status.code(), Some(1));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"schema_version\": 1}").unwrap();
    assert_eq!(sentinel(&["validate", "--scenario", bad.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(sentinel(&["validate"]).status.code(), Some(1));
}
