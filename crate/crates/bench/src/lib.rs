//! Fixtures shared by the benchmarks in `benches/`.

use riskdrive_core::{AgentState, RoadGeometry};

/// Ego in the middle lane of a five-lane road with `n` vehicles spread
/// over the lanes between 120 m behind and 160 m ahead, none within 50 m of
/// the ego in its own lane.
pub fn dense_traffic(n: usize) -> (RoadGeometry, AgentState, Vec<AgentState>) {
    let road = RoadGeometry::new(5, 3.7, 3000.0).expect("valid road");
    let ego = AgentState::new(0, road.lane_center(3), 500.0, 28.0);
    let others = (0..n)
        .map(|i| {
            // Low-discrepancy offsets keep the layout spread and repeatable.
            let u = (i as f64 * 0.618_033_988_75).fract();
            let w = (i as f64 * 0.414_213_562_37).fract();
            let lane = i % road.num_lanes + 1;
            let mut y = 380.0 + 280.0 * u;
            if lane == 3 && (y - ego.position.y).abs() < 50.0 {
                y += 100.0;
            }
            AgentState::new(i as u64 + 1, road.lane_center(lane) + (w - 0.5), y, 20.0 + 15.0 * w)
        })
        .collect();
    (road, ego, others)
}
