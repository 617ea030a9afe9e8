//! Path tracking: pure-pursuit steering, proportional speed control, and a
//! car-following governor that caps acceleration behind a lead vehicle.

use crate::config::{EgoConfig, SimConfig};
use crate::geometry::Vec2;
use crate::planner::Reference;
use crate::road::{AgentState, ControlInput};

struct Projection {
    /// Arc length of the closest point along the polyline.
    arc: f64,
    /// Reference time at the closest point.
    t: f64,
}

fn project(points: &[(Vec2, f64)], p: Vec2) -> Projection {
    let mut best = (f64::INFINITY, 0.0, points[0].1);
    let mut arc = 0.0;
    for w in points.windows(2) {
        let (a, ta) = w[0];
        let (b, tb) = w[1];
        let seg = b - a;
        let len2 = seg.dot(seg);
        let s = if len2 > 0.0 { ((p - a).dot(seg) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let closest = a + seg * s;
        let d = (p - closest).norm();
        if d < best.0 {
            best = (d, arc + s * len2.sqrt(), ta + (tb - ta) * s);
        }
        arc += len2.sqrt();
    }
    Projection { arc: best.1, t: best.2 }
}

/// Reference speed at time `t`, held constant past either end.
fn speed_at(reference: &Reference, t: f64) -> f64 {
    let pts = &reference.points;
    let i = pts.partition_point(|p| p.t <= t);
    if i == 0 {
        return pts[0].speed;
    }
    if i == pts.len() {
        return pts[i - 1].speed;
    }
    let (a, b) = (pts[i - 1], pts[i]);
    a.speed + (b.speed - a.speed) * (t - a.t) / (b.t - a.t)
}

/// Point at arc length `s`, extending the last segment past the end.
fn point_at(points: &[(Vec2, f64)], s: f64) -> Vec2 {
    let mut arc = 0.0;
    let mut last_dir = Vec2::new(0.0, 1.0);
    for w in points.windows(2) {
        let seg = w[1].0 - w[0].0;
        let len = seg.norm();
        if len > 0.0 {
            last_dir = seg * (1.0 / len);
            if s <= arc + len {
                return w[0].0 + last_dir * (s - arc);
            }
        }
        arc += len;
    }
    points.last().expect("non-empty").0 + last_dir * (s - arc)
}

/// Steering and acceleration to follow `reference`. A reference with no
/// length returns `last` unchanged.
pub fn track_reference(
    ego: &AgentState,
    reference: &Reference,
    ego_cfg: &EgoConfig,
    sim: &SimConfig,
    last: ControlInput,
) -> ControlInput {
    let points: Vec<(Vec2, f64)> = reference.points.iter().map(|p| (p.position, p.t)).collect();
    let total: f64 = points.windows(2).map(|w| (w[1].0 - w[0].0).norm()).sum();
    if points.len() < 2 || !(total > 0.0) {
        return last;
    }
    let proj = project(&points, ego.position);
    let target = point_at(&points, proj.arc + sim.lookahead.max(sim.lookahead_time * ego.speed));
    let to_target = target - ego.position;
    let ld = to_target.norm().max(1e-6);
    let alpha = to_target.heading() - ego.heading;
    let mut steer = (2.0 * sim.wheelbase * alpha.sin() / ld).atan();

    // lateral acceleration v² tan(δ) / L must stay within the style limit
    let v2 = ego.speed * ego.speed;
    if v2 > 0.0 {
        let lat_limit = (ego_cfg.lateral_accel_limit * sim.wheelbase / v2).atan();
        steer = steer.clamp(-lat_limit, lat_limit);
    }
    let accel = sim.speed_gain * (speed_at(reference, proj.t + sim.speed_preview) - ego.speed);
    ControlInput { accel, steer }.clamped(ego_cfg.accel_limit, sim.steer_max)
}

/// Intelligent-driver-model acceleration behind the nearest vehicle ahead
/// whose footprint overlaps the ego's lateral corridor, or `None` when no
/// such vehicle exists.
pub fn follow_accel(
    ego: &AgentState,
    others: &[AgentState],
    target_speed: f64,
    ego_cfg: &EgoConfig,
    sim: &SimConfig,
) -> Option<f64> {
    let lead = others
        .iter()
        .filter(|o| o.id != ego.id)
        .filter(|o| {
            let dx = (o.position.x - ego.position.x).abs();
            dx < (o.width + ego.width) / 2.0 + 0.5 && o.position.y > ego.position.y
        })
        .min_by(|a, b| a.position.y.total_cmp(&b.position.y))?;
    let gap = lead.position.y - ego.position.y - (lead.length + ego.length) / 2.0;
    if gap <= 0.0 {
        return Some(-sim.max_brake);
    }
    let a = ego_cfg.accel_limit;
    let b = ego_cfg.accel_limit.max(2.0);
    let v = ego.speed;
    let dv = v - lead.speed;
    let s_star = sim.min_gap + (v * sim.time_headway + v * dv / (2.0 * (a * b).sqrt())).max(0.0);
    let v0 = target_speed.max(0.1);
    let accel = a * (1.0 - (v / v0).powi(4) - (s_star / gap).powi(2));
    Some(accel.max(-sim.max_brake))
}

/// Combined longitudinal command: the tracker's acceleration capped by the
/// car-following governor.
pub fn governed_control(
    ego: &AgentState,
    tracked: ControlInput,
    others: &[AgentState],
    target_speed: f64,
    ego_cfg: &EgoConfig,
    sim: &SimConfig,
) -> ControlInput {
    match follow_accel(ego, others, target_speed, ego_cfg, sim) {
        Some(a) if a < tracked.accel => ControlInput { accel: a.max(-sim.max_brake), ..tracked },
        _ => tracked,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{DrivingStyle, StylePresets};
    use crate::planner::ReferencePoint;

    fn straight(x: f64, speed: f64) -> Reference {
        Reference {
            points: (0..=25)
                .map(|k| ReferencePoint { t: k as f64 * 0.2, position: Vec2::new(x, k as f64 * speed * 0.2), speed })
                .collect(),
        }
    }

    fn ego_cfg(accel_limit: f64) -> EgoConfig {
        let mut c = EgoConfig::from_style(DrivingStyle::Normal, StylePresets::default().normal, 20.0);
        c.accel_limit = accel_limit;
        c
    }

    #[test]
    fn equilibrium_on_reference() {
        let ego = AgentState::new(0, 5.55, 3.0, 20.0);
        let c =
            track_reference(&ego, &straight(5.55, 20.0), &ego_cfg(2.0), &SimConfig::default(), ControlInput::default());
        assert!(c.steer.abs() < 1e-6);
        assert!(c.accel.abs() < 1e-6);
    }

    #[test]
    fn steers_back_toward_reference() {
        // ego to the right (smaller x) of the path steers toward +x
        let ego = AgentState::new(0, 5.05, 3.0, 20.0);
        let c =
            track_reference(&ego, &straight(5.55, 20.0), &ego_cfg(2.0), &SimConfig::default(), ControlInput::default());
        assert!(c.steer > 0.0);
        let ego = AgentState::new(0, 6.05, 3.0, 20.0);
        let c =
            track_reference(&ego, &straight(5.55, 20.0), &ego_cfg(2.0), &SimConfig::default(), ControlInput::default());
        assert!(c.steer < 0.0);
    }

    #[test]
    fn acceleration_clamped() {
        let ego = AgentState::new(0, 5.55, 0.0, 18.0);
        let sim = SimConfig { speed_gain: 1.0, speed_preview: 0.0, ..SimConfig::default() };
        let c = track_reference(&ego, &straight(5.55, 20.0), &ego_cfg(1.5), &sim, ControlInput::default());
        assert_eq!(c.accel, 1.5);
    }

    #[test]
    fn degenerate_reference_holds_last() {
        let ego = AgentState::new(0, 5.55, 0.0, 18.0);
        let last = ControlInput { accel: 0.3, steer: -0.01 };
        let single = Reference { points: vec![ReferencePoint { t: 0.0, position: Vec2::ZERO, speed: 1.0 }] };
        assert_eq!(track_reference(&ego, &single, &ego_cfg(2.0), &SimConfig::default(), last), last);
        let empty = Reference { points: vec![] };
        assert_eq!(track_reference(&ego, &empty, &ego_cfg(2.0), &SimConfig::default(), last), last);
    }

    #[test]
    fn governor_brakes_behind_slow_lead() {
        let ego = AgentState::new(0, 1.85, 0.0, 30.0);
        let lead = AgentState::new(1, 1.85, 25.0, 20.0);
        let adjacent = AgentState::new(2, 5.55, 10.0, 0.0);
        let a = follow_accel(&ego, &[lead, adjacent], 30.0, &ego_cfg(2.0), &SimConfig::default()).unwrap();
        assert!(a < -1.0);
        assert!(follow_accel(&ego, &[adjacent], 30.0, &ego_cfg(2.0), &SimConfig::default()).is_none());
    }
}
