use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn scenario(name: &str) -> PathBuf {
    repo().join("scenarios").join(name)
}

fn riskdrive(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riskdrive")).arg("--out").arg(out).args(args).output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

const EMPTY_ROAD: &str = r#"{
  "road": {"num_lanes": 3, "lane_width_m": 3.7, "length_m": 2000},
  "agents": [],
  "ego": {"x_m": 5.55, "y_m": 100, "speed_mps": 25, "desired_speed_mps": 25},
  "duration_s": 4,
  "seed": 3
}"#;

const ONE_AGENT: &str = r#"{
  "road": {"num_lanes": 3, "lane_width_m": 3.7, "length_m": 2000},
  "agents": [{"id": 1, "x_m": 5.55, "y_m": 120, "speed_mps": 20}],
  "ego": {"x_m": 5.55, "y_m": 100, "speed_mps": 25, "desired_speed_mps": 25},
  "duration_s": 4
}"#;

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn simulate_weave_writes_trace_summary_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    ok(&riskdrive(&out, &["simulate", path_str(&scenario("weave_aggressive.json"))]));
    let summary = json(&out.join("summary.json"));
    assert_eq!(summary["summary"]["collisions"], 0);
    assert!(summary["summary"]["ego_lane_changes"].as_array().unwrap().len() >= 2);
    let lane_changes = summary["events"].as_array().unwrap().iter().filter(|e| e["kind"] == "lane_change").count();
    assert!(lane_changes >= 2);

    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 2);
    for name in ["trace.jsonl", "summary.json", "trajectories.csv"] {
        assert!(manifest["outputs"].as_array().unwrap().iter().any(|o| o == name), "{name}");
        assert!(out.join(name).exists());
    }
}

#[test]
fn simulate_is_byte_stable() {
    let tmp = TempDir::new().unwrap();
    let sc = scenario("yield.json");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&riskdrive(&a, &["simulate", path_str(&sc), "--seed", "9"]));
    ok(&riskdrive(&b, &["simulate", path_str(&sc), "--seed", "9"]));
    for name in ["trace.jsonl", "summary.json", "trajectories.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    assert_eq!(json(&a.join("manifest.json"))["seed"], 9);
}

#[test]
fn malformed_scenario_exits_2_naming_the_field() {
    let tmp = TempDir::new().unwrap();
    let bad = write(&tmp, "bad.json", &EMPTY_ROAD.replace(r#""speed_mps": 25"#, r#""speed_mps": "fast""#));
    let out = riskdrive(&tmp.path().join("o"), &["simulate", path_str(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("ego.speed_mps"), "{err}");
}

#[test]
fn missing_files_exit_1() {
    let tmp = TempDir::new().unwrap();
    let o = tmp.path().join("o");
    assert_eq!(riskdrive(&o, &["simulate", "no/such/scenario.json"]).status.code(), Some(1));
    assert_eq!(riskdrive(&o, &["learn-params", "no/such/data.csv"]).status.code(), Some(1));
    assert_eq!(riskdrive(&o, &["validate", "no/such/data.csv"]).status.code(), Some(1));
}

#[test]
fn plan_on_empty_road_keeps_lane_at_zero_cost() {
    let tmp = TempDir::new().unwrap();
    let sc = write(&tmp, "empty.json", EMPTY_ROAD);
    let out = tmp.path().join("o");
    ok(&riskdrive(&out, &["plan", path_str(&sc)]));
    let plan = json(&out.join("plan.json"));
    assert_eq!(plan["complete"], true);
    assert_eq!(plan["total_cost"], 0.0);
    assert!(plan["lanes"].as_array().unwrap().iter().all(|l| l == 2));
    assert_eq!(json(&out.join("manifest.json"))["command"], "plan");
}

#[test]
fn plan_with_zero_threshold_is_incomplete() {
    let tmp = TempDir::new().unwrap();
    let sc = write(&tmp, "one.json", ONE_AGENT);
    let out = tmp.path().join("o");
    ok(&riskdrive(&out, &["plan", path_str(&sc), "--threshold", "0"]));
    let plan = json(&out.join("plan.json"));
    assert_eq!(plan["complete"], false);
    assert_eq!(plan["threshold"], 0.0);
}

#[test]
fn plan_matches_published_schema() {
    let schema = json(&repo().join("schemas/plan.schema.json"));
    let validator = jsonschema::JSONSchema::compile(&schema).unwrap();
    let tmp = TempDir::new().unwrap();
    for (i, sc) in [scenario("weave_conservative.json"), scenario("yield.json"), write(&tmp, "one.json", ONE_AGENT)]
        .iter()
        .enumerate()
    {
        let out = tmp.path().join(format!("o{i}"));
        ok(&riskdrive(&out, &["plan", path_str(sc)]));
        let plan = json(&out.join("plan.json"));
        if let Err(errors) = validator.validate(&plan) {
            let msgs: Vec<String> = errors.map(|e| format!("{} at {}", e, e.instance_path)).collect();
            panic!("{}: {msgs:?}", sc.display());
        };
    }
}

#[test]
fn config_file_overrides_defaults() {
    let tmp = TempDir::new().unwrap();
    let sc = write(&tmp, "empty.json", EMPTY_ROAD);
    let cfg = write(&tmp, "model.toml", "[planner]\nn_horiz = 6\n");
    let out = tmp.path().join("o");
    ok(&riskdrive(&out, &["--config", path_str(&cfg), "plan", path_str(&sc)]));
    assert_eq!(json(&out.join("plan.json"))["nodes"].as_array().unwrap().len(), 7);
    assert!(json(&out.join("manifest.json"))["config"].as_str().unwrap().ends_with("model.toml"));
}

#[test]
fn bad_config_exits_2() {
    let tmp = TempDir::new().unwrap();
    let sc = write(&tmp, "empty.json", EMPTY_ROAD);
    let o = tmp.path().join("o");
    for (name, text) in [("typo.toml", "[planner]\nn_horiz_typo = 6\n"), ("neg.toml", "[risk]\nalpha = -1.0\n")] {
        let cfg = write(&tmp, name, text);
        let out = riskdrive(&o, &["--config", path_str(&cfg), "plan", path_str(&sc)]);
        assert_eq!(out.status.code(), Some(2), "{name}");
    }
    let cfg = write(&tmp, "typo2.toml", "[planner]\nn_horiz_typo = 6\n");
    let err = String::from_utf8_lossy(&riskdrive(&o, &["--config", path_str(&cfg), "plan", path_str(&sc)]).stderr)
        .to_string();
    assert!(err.contains("planner.n_horiz_typo"), "{err}");
}

#[test]
fn risk_field_on_empty_road_is_zero() {
    let tmp = TempDir::new().unwrap();
    let sc = write(&tmp, "empty.json", EMPTY_ROAD);
    let out = tmp.path().join("o");
    let args = [
        "risk-field",
        path_str(&sc),
        "--step",
        "3",
        "--dx",
        "0.5",
        "--dy",
        "2",
        "--behind",
        "10",
        "--ahead",
        "30",
        "--svg",
    ];
    ok(&riskdrive(&out, &args));
    let csv = fs::read_to_string(out.join("risk_field.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    // 11.1 m / 0.5 m rounds to 22 columns; 40 m / 2 m gives 21 rows.
    let cells = 22 * 21;
    assert_eq!(lines.len(), cells + 1);
    assert_eq!(lines[0], "i,t_s,x_m,y_m,risk");
    assert!(lines[1..].iter().all(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap() == 0.0));
    let svg = fs::read_to_string(out.join("risk_field.svg")).unwrap();
    assert_eq!(svg.matches("<rect").count(), cells);
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 2);
}

#[test]
fn risk_field_step_out_of_range_exits_2() {
    let tmp = TempDir::new().unwrap();
    let sc = write(&tmp, "one.json", ONE_AGENT);
    let out = riskdrive(&tmp.path().join("o"), &["risk-field", path_str(&sc), "--step", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let out = riskdrive(&tmp.path().join("o"), &["risk-field", path_str(&sc), "--step", "26"]);
    assert_eq!(out.status.code(), Some(2));
}

fn pair_csv() -> String {
    let mut s = String::from("vehicle_id,frame,x,y,speed\n");
    for f in 0..20 {
        let t = f as f64 / 10.0;
        s += &format!("1,{f},1.85,{},20\n", 20.0 * t);
        s += &format!("2,{f},1.85,{},20\n", 30.0 + 20.0 * t);
    }
    s
}

#[test]
fn learn_params_matches_hand_value() {
    let tmp = TempDir::new().unwrap();
    let data = write(&tmp, "pair.csv", &pair_csv());
    let out = tmp.path().join("o");
    let stdout = ok(&riskdrive(&out, &["learn-params", path_str(&data), "--lanes", "3", "--lane-width", "3.7"]));
    assert!(stdout.starts_with("lane"));
    let learned = json(&out.join("learned.json"));
    // Follower sees exp(-((30 / 22.25)^2)^1.5); the leader sees nothing.
    let v = learned["raw"][0][1].as_f64().unwrap();
    assert!((v - 0.043_096_27).abs() < 1e-7, "{v}");
    let table = json(&out.join("lane_preference.json"));
    assert_eq!(table["provenance"], "learned");
    assert_eq!(table["lanes"][0]["risk_at"]["mean"], 1.0);
}

fn weave_csv() -> String {
    let mut s = String::from("vehicle_id,frame,x,y,speed\n");
    for f in 0..220 {
        let t = f as f64 / 10.0;
        let lateral = |t0: f64| ((t - t0) / 3.0).clamp(0.0, 1.0);
        let x = 1.85 + 3.7 * (lateral(4.0) - lateral(12.0));
        s += &format!("1,{f},{x},{},25\n", 25.0 * t);
        s += &format!("2,{f},5.55,{},27\n", 80.0 + 27.0 * t);
    }
    s
}

#[test]
fn validate_identity_prints_full_accuracy() {
    let tmp = TempDir::new().unwrap();
    let data = write(&tmp, "weave.csv", &weave_csv());
    let out = tmp.path().join("o");
    let stdout = ok(&riskdrive(
        &out,
        &["validate", path_str(&data), "--lanes", "3", "--lane-width", "3.7", "--model", "identity"],
    ));
    let total = stdout.lines().find(|l| l.starts_with("total")).expect("total row");
    let cols: Vec<&str> = total.split_whitespace().collect();
    assert_eq!(cols[1], "2");
    assert_eq!(cols[2], "1.000");
    let report = json(&out.join("report.json"));
    assert_eq!(report["total"]["accuracy"], 1.0);
    assert_eq!(fs::read_to_string(out.join("events.csv")).unwrap().lines().count(), 3);
}

#[test]
fn learned_table_feeds_back_into_validation() {
    let tmp = TempDir::new().unwrap();
    let data = write(&tmp, "weave.csv", &weave_csv());
    let learn = tmp.path().join("learn");
    ok(&riskdrive(&learn, &["learn-params", path_str(&data), "--lanes", "3", "--lane-width", "3.7"]));
    let table = learn.join("lane_preference.json");
    let out = tmp.path().join("v");
    ok(&riskdrive(
        &out,
        &["validate", path_str(&data), "--lanes", "3", "--lane-width", "3.7", "--preference", path_str(&table)],
    ));
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);
}

#[test]
fn printed_config_round_trips() {
    let tmp = TempDir::new().unwrap();
    let first = tmp.path().join("a");
    let text = ok(&riskdrive(&first, &["print-config"]));
    assert!(text.contains("[planner]") && text.contains("[styles.aggressive]"));
    let second = tmp.path().join("b");
    let again = ok(&riskdrive(&second, &["--config", path_str(&first.join("config.toml")), "print-config"]));
    assert_eq!(text, again);
    assert_eq!(json(&second.join("manifest.json"))["command"], "print-config");
}
