use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_immunenet")).args(args).output().unwrap()
}

fn scenario(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn header(dir: &Path, file: &str) -> String {
    std::fs::read_to_string(dir.join(file)).unwrap().lines().next().unwrap_or_default().to_string()
}

#[test]
fn run_writes_report_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = bin(&["run", &scenario("c_offline_boot.json"), "--out", out, "--trace-level", "full"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["mode"], "sana");
    assert!(report["metrics"]["scorecard"].is_object());
    assert_eq!(header(dir.path(), "events.csv"), "tick,kind,node,detail");
    assert_eq!(header(dir.path(), "infections.csv"), "tick,node,status");
    assert_eq!(header(dir.path(), "audit.csv"), "tick,node,component,event_kind,verdict");
    assert_eq!(header(dir.path(), "substances.csv"), "tick,substance_id,node,action");
    assert_eq!(header(dir.path(), "levels.csv"), "tick,node,level,attraction");
    assert!(header(dir.path(), "population.csv").starts_with("tick,matcher,fusion,prober,repair"));
    let feed = std::fs::read_to_string(dir.path().join("admin_feed.jsonl")).unwrap();
    assert!(feed.lines().count() > 0);
    for line in feed.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["tick"].is_u64());
    }
}

#[test]
fn trace_level_controls_exports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert!(bin(&["run", &scenario("c_offline_boot.json"), "--out", out, "--trace-level", "summary"]).status.success());
    assert!(dir.path().join("infections.csv").exists());
    assert!(!dir.path().join("events.csv").exists());
    let none = tempfile::tempdir().unwrap();
    assert!(bin(&["run", &scenario("c_offline_boot.json"), "--out", none.path().to_str().unwrap(), "--trace-level", "none"])
        .status
        .success());
    let names: Vec<_> = std::fs::read_dir(none.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, vec!["report.json"]);
}

#[test]
fn compare_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = bin(&["compare", &scenario("c_offline_boot.json"), "--modes", "baseline,sana", "--out", out, "--trace-level", "none"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("comparison.json").exists());
    assert!(dir.path().join("baseline/report.json").exists() && dir.path().join("sana/report.json").exists());

    let o = bin(&["compare", &scenario("c_offline_boot.json"), "--modes", "sana", "--out", out]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("at least 2 modes"));

    let o = bin(&["sweep", &scenario("c_offline_boot.json"), "--seeds", "1,2,3", "--out", out, "--trace-level", "none"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sweep: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("sweep.json")).unwrap()).unwrap();
    assert_eq!(sweep["seeds"], serde_json::json!([1, 2, 3]));
    assert!(sweep["stats"]["final_infected"]["stddev"].is_number());
}

#[test]
fn invalid_scenario_exits_nonzero_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("a_sana.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["cells"]["autonomy"] = serde_json::json!(2.0);
    v["adversary"]["worms"][0]["fanout"] = serde_json::json!(0);
    let path = dir.path().join("bad.json");
    std::fs::write(&path, v.to_string()).unwrap();
    let o = bin(&["run", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("cells.autonomy"), "{err}");
    assert!(err.contains("adversary.worms[0].fanout"), "{err}");

    std::fs::write(&path, "{ not json").unwrap();
    let o = bin(&["run", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
