use riskdrive_core::geometry::OrientedRect;
use riskdrive_core::scenario::{AgentSpec, Behavior, EgoSpec};
use riskdrive_core::sim::{run_scenario, SimEvent, SimTrace, TickRecord, VehicleRecord};
use riskdrive_core::*;

fn road() -> RoadGeometry {
    RoadGeometry::new(3, 3.7, 3000.0).unwrap()
}

fn agent(id: u64, lane: Lane, y: f64, speed: f64) -> AgentSpec {
    AgentSpec {
        id,
        x_m: road().lane_center(lane),
        y_m: y,
        speed_mps: speed,
        heading_rad: 0.0,
        length_m: 4.5,
        width_m: 1.8,
        behavior: Behavior::ConstantSpeed,
    }
}

fn scenario(agents: Vec<AgentSpec>, ego_lane: Lane, speed: f64, desired: f64, duration: f64) -> Scenario {
    Scenario {
        road: road(),
        agents,
        ego: EgoSpec {
            id: 0,
            x_m: road().lane_center(ego_lane),
            y_m: 100.0,
            speed_mps: speed,
            heading_rad: 0.0,
            length_m: 4.5,
            width_m: 1.8,
            risk_threshold: None,
            desired_speed_mps: desired,
            style: DrivingStyle::Normal,
        },
        duration_s: duration,
        seed: 0,
        start_time_s: 0.0,
    }
}

fn run(sc: &Scenario) -> SimTrace {
    run_scenario(sc, &ModelConfig::default(), Some(&LanePreference::builtin())).unwrap()
}

#[test]
fn empty_road_is_an_equilibrium() {
    let sc = scenario(vec![], 2, 25.0, 25.0, 20.0);
    let trace = run(&sc);
    let x0 = sc.ego.x_m;
    for tick in &trace.ticks {
        assert!((tick.ego.x - x0).abs() < 0.1, "t = {}: x = {}", tick.t, tick.ego.x);
        assert!((tick.ego.speed - 25.0).abs() < 0.1, "t = {}: speed = {}", tick.t, tick.ego.speed);
    }
    assert!(trace.lane_changes(AgentId(0)).is_empty());
    let last = trace.final_tick().unwrap();
    assert!((last.ego.y - (100.0 + 25.0 * last.t)).abs() < 1.0);
}

#[test]
fn ticks_are_uniformly_spaced() {
    let trace = run(&scenario(vec![agent(1, 2, 160.0, 20.0)], 2, 25.0, 30.0, 6.0));
    let dt = trace.dt;
    assert!(trace.ticks.len() as f64 >= 6.0 / dt);
    for w in trace.ticks.windows(2) {
        assert!(w[1].t > w[0].t);
        assert!((w[1].t - w[0].t - dt).abs() < 1e-9);
    }
}

fn footprint(r: &VehicleRecord, length: f64, width: f64) -> OrientedRect {
    OrientedRect { center: Vec2::new(r.x, r.y), heading: r.heading, length, width }
}

fn overlapping(tick: &TickRecord, a: AgentId, b: AgentId) -> bool {
    let get = |id| if id == AgentId(0) { Some(&tick.ego) } else { tick.agent(id) };
    match (get(a), get(b)) {
        (Some(p), Some(q)) => footprint(p, 4.5, 1.8).overlaps(&footprint(q, 4.5, 1.8)),
        _ => false,
    }
}

#[test]
fn rear_end_contact_is_recorded_at_first_overlap() {
    // Two scripted vehicles in the left lane; the faster one drives through
    // the slower one while the ego stays away in the right lane.
    let sc = scenario(vec![agent(7, 3, 220.0, 20.0), agent(4, 3, 190.0, 30.0)], 1, 25.0, 25.0, 8.0);
    let trace = run(&sc);
    let hits: Vec<_> = trace.collisions().copied().collect();
    assert_eq!(hits.len(), 1, "{hits:?}");
    let SimEvent::Collision { t, a, b } = hits[0] else { unreachable!() };
    assert_eq!((a, b), (AgentId(4), AgentId(7)));
    assert_eq!(trace.ego_collisions(), 0);

    let i = trace.ticks.iter().position(|k| (k.t - t).abs() < 1e-9).unwrap();
    assert!(overlapping(&trace.ticks[i], a, b));
    assert!(overlapping(&trace.ticks[i], b, a));
    assert!(!overlapping(&trace.ticks[i - 1], a, b));
    // Gap closes at 10 m/s from 30 - 4.5 = 25.5 m.
    assert!((t - 2.55).abs() <= trace.dt + 1e-9, "{t}");
    let first_overlap = trace.ticks.iter().position(|k| overlapping(k, a, b)).unwrap();
    assert_eq!(first_overlap, i);
}

#[test]
fn identical_inputs_give_identical_bytes() {
    let sc = scenario(
        vec![agent(1, 2, 150.0, 18.0), agent(2, 1, 60.0, 31.0), agent(3, 3, 230.0, 22.0)],
        2,
        25.0,
        30.0,
        10.0,
    );
    let bytes = |trace: &SimTrace| {
        let mut out = Vec::new();
        trace.write_jsonl(&mut out).unwrap();
        out
    };
    assert_eq!(bytes(&run(&sc)), bytes(&run(&sc)));
}

#[test]
fn jsonl_has_one_record_per_tick_then_events() {
    let trace = run(&scenario(vec![agent(1, 2, 130.0, 15.0)], 2, 25.0, 30.0, 8.0));
    let mut out = Vec::new();
    trace.write_jsonl(&mut out).unwrap();
    let lines: Vec<serde_json::Value> =
        String::from_utf8(out).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), trace.ticks.len() + trace.events.len());
    assert!(lines[..trace.ticks.len()].iter().all(|v| v["tick"]["t"].is_number()));
    assert!(lines[trace.ticks.len()..].iter().all(|v| v["event"]["kind"].is_string()));
}

#[test]
fn invalid_scenarios_are_rejected() {
    let mut dup = scenario(vec![agent(1, 2, 150.0, 20.0), agent(1, 3, 150.0, 20.0)], 1, 25.0, 25.0, 5.0);
    assert!(run_scenario(&dup, &ModelConfig::default(), None).is_err());
    dup.agents.pop();
    dup.duration_s = 0.0;
    assert!(run_scenario(&dup, &ModelConfig::default(), None).is_err());
    let mut off = scenario(vec![], 1, 25.0, 25.0, 5.0);
    off.ego.x_m = -3.0;
    assert!(run_scenario(&off, &ModelConfig::default(), None).is_err());
}

#[test]
fn unknown_json_field_is_named() {
    let text = r#"{"road": {"num_lanes": 3, "lane_width_m": 3.7, "length_m": 1000},
        "agents": [], "ego": {"x_m": 1.85, "y_m": 0, "speed_mps": "fast", "desired_speed_mps": 30},
        "duration_s": 5}"#;
    let err = Scenario::from_json_str(text).unwrap_err().to_string();
    assert!(err.contains("ego.speed_mps"), "{err}");
}
