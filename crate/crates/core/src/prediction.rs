//! Multimodal trajectory prediction for surrounding vehicles.
//!
//! Every predictor produces six trajectories per vehicle, one per
//! combination of lateral maneuver (left change, keep lane, right change)
//! and longitudinal maneuver (maintain speed, decelerate), each with a
//! probability. The built-in [`PhysicsPredictor`] generates the shapes from
//! kinematics and scores the maneuvers with a softmax over hand-set
//! features; other predictors can be plugged in through
//! [`TrajectoryPredictor`] and [`PredictorRegistry`].

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::config::{PlannerConfig, PredictorConfig};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::road::{AgentId, AgentState, RoadGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LateralManeuver {
    LeftChange,
    KeepLane,
    RightChange,
}

impl LateralManeuver {
    pub const ALL: [Self; 3] = [Self::LeftChange, Self::KeepLane, Self::RightChange];

    /// Lane index offset of the maneuver's target lane.
    pub fn lane_offset(self) -> isize {
        match self {
            Self::LeftChange => 1,
            Self::KeepLane => 0,
            Self::RightChange => -1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LongitudinalManeuver {
    Maintain,
    Decelerate,
}

impl LongitudinalManeuver {
    pub const ALL: [Self; 2] = [Self::Maintain, Self::Decelerate];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ManeuverClass {
    pub lateral: LateralManeuver,
    pub longitudinal: LongitudinalManeuver,
}

impl ManeuverClass {
    pub fn all() -> impl Iterator<Item = ManeuverClass> {
        LateralManeuver::ALL.into_iter().flat_map(|lateral| {
            LongitudinalManeuver::ALL.into_iter().map(move |longitudinal| ManeuverClass { lateral, longitudinal })
        })
    }

    pub fn label(&self) -> String {
        let lat = match self.lateral {
            LateralManeuver::LeftChange => "left_change",
            LateralManeuver::KeepLane => "keep_lane",
            LateralManeuver::RightChange => "right_change",
        };
        let lon = match self.longitudinal {
            LongitudinalManeuver::Maintain => "maintain",
            LongitudinalManeuver::Decelerate => "decelerate",
        };
        format!("{lat}/{lon}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    /// Seconds after the prediction time.
    pub t: f64,
    pub position: Vec2,
    pub velocity: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedTrajectory {
    pub maneuver: ManeuverClass,
    pub probability: f64,
    /// Points at `t = i * point_period` for `i = 1..=n_time`.
    pub points: Vec<TrajectoryPoint>,
}

/// All predicted futures of one vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedTrajectorySet {
    pub vehicle: AgentId,
    pub length: f64,
    pub width: f64,
    pub trajectories: Vec<PredictedTrajectory>,
}

impl PredictedTrajectorySet {
    pub fn total_probability(&self) -> f64 {
        self.trajectories.iter().map(|t| t.probability).sum()
    }

    /// Probability mass summed over the longitudinal variants of `lateral`.
    pub fn lateral_probability(&self, lateral: LateralManeuver) -> f64 {
        self.trajectories.iter().filter(|t| t.maneuver.lateral == lateral).map(|t| t.probability).sum()
    }

    pub fn trajectory(&self, maneuver: ManeuverClass) -> Option<&PredictedTrajectory> {
        self.trajectories.iter().find(|t| t.maneuver == maneuver)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistorySample {
    pub t: f64,
    pub state: AgentState,
}

/// Past states of one vehicle, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleHistory {
    pub id: AgentId,
    samples: Vec<HistorySample>,
}

impl VehicleHistory {
    pub fn new(id: AgentId, samples: Vec<HistorySample>) -> Result<Self> {
        if samples.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::invalid(format!("history of vehicle {id}: timestamps must be strictly increasing")));
        }
        Ok(Self { id, samples })
    }

    /// History consisting only of the present state.
    pub fn from_state(state: AgentState) -> Self {
        Self { id: state.id, samples: vec![HistorySample { t: 0.0, state }] }
    }

    pub fn samples(&self) -> &[HistorySample] {
        &self.samples
    }

    pub fn current(&self) -> Option<&AgentState> {
        self.samples.last().map(|s| &s.state)
    }

    /// Lateral velocity from the last two samples, or from the heading when
    /// only one sample exists.
    pub fn lateral_velocity(&self) -> Option<f64> {
        match self.samples.as_slice() {
            [] => None,
            [only] => Some(only.state.velocity().x),
            [.., a, b] => Some((b.state.position.x - a.state.position.x) / (b.t - a.t)),
        }
    }
}

/// Interface every trajectory predictor implements.
pub trait TrajectoryPredictor: Send + Sync {
    fn name(&self) -> &str;

    fn predict(
        &self,
        history: &VehicleHistory,
        neighbors: &[AgentState],
        road: &RoadGeometry,
        planner: &PlannerConfig,
    ) -> Result<PredictedTrajectorySet>;
}

/// Named predictors; `"physics"` is always available.
pub struct PredictorRegistry {
    predictors: BTreeMap<String, Box<dyn TrajectoryPredictor>>,
}

impl PredictorRegistry {
    pub fn with_builtin(cfg: &PredictorConfig) -> Self {
        let mut registry = Self { predictors: BTreeMap::new() };
        registry.register(Box::new(PhysicsPredictor::new(cfg.clone())));
        registry
    }

    pub fn register(&mut self, predictor: Box<dyn TrajectoryPredictor>) {
        self.predictors.insert(predictor.name().to_string(), predictor);
    }

    pub fn get(&self, name: &str) -> Result<&dyn TrajectoryPredictor> {
        self.predictors
            .get(name)
            .map(|p| p.as_ref())
            .ok_or_else(|| Error::config(format!("unknown predictor {name:?}")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.predictors.keys().map(String::as_str)
    }
}

// Feature weights of the built-in maneuver score.
const W_LATERAL_VELOCITY: f64 = 1.0;
const W_CENTER_OFFSET: f64 = 1.0;
const W_BLOCKED: f64 = 2.0;
const LANE_CHANGE_BIAS: f64 = 1.0;
const DECEL_BIAS: f64 = 1.0;
const W_CLOSING: f64 = 2.0;

/// Kinematic predictor: constant-speed or constant-deceleration longitudinal
/// profiles combined with quintic lateral blends toward a lane centre.
#[derive(Debug, Clone, Default)]
pub struct PhysicsPredictor {
    cfg: PredictorConfig,
}

impl PhysicsPredictor {
    pub fn new(cfg: PredictorConfig) -> Self {
        Self { cfg }
    }

    /// Raw (pre-softmax) score of each lateral maneuver, in
    /// [`LateralManeuver::ALL`] order. `None` marks an infeasible maneuver.
    pub fn lateral_scores(
        &self,
        state: &AgentState,
        lateral_velocity: f64,
        neighbors: &[AgentState],
        road: &RoadGeometry,
    ) -> [Option<f64>; 3] {
        let lane = state.lane(road);
        let offset = (state.position.x - road.lane_center(lane)) / (road.lane_width / 2.0);
        LateralManeuver::ALL.map(|m| {
            let target = lane as isize + m.lane_offset();
            if !road.has_lane(target) {
                return None;
            }
            let score = match m {
                LateralManeuver::KeepLane => {
                    -W_LATERAL_VELOCITY * lateral_velocity.abs() - W_CENTER_OFFSET * offset.abs()
                }
                LateralManeuver::LeftChange => {
                    W_LATERAL_VELOCITY * lateral_velocity + W_CENTER_OFFSET * offset
                        - LANE_CHANGE_BIAS
                        - W_BLOCKED * blocked(state, target as usize, neighbors, road)
                }
                LateralManeuver::RightChange => {
                    -W_LATERAL_VELOCITY * lateral_velocity
                        - W_CENTER_OFFSET * offset
                        - LANE_CHANGE_BIAS
                        - W_BLOCKED * blocked(state, target as usize, neighbors, road)
                }
            };
            Some(score)
        })
    }

    /// Scores for `[maintain, decelerate]`.
    pub fn longitudinal_scores(&self, state: &AgentState, neighbors: &[AgentState], road: &RoadGeometry) -> [f64; 2] {
        let lane = state.lane(road);
        let pressure = neighbors
            .iter()
            .filter(|n| n.id != state.id && n.lane(road) == lane && n.position.y > state.position.y)
            .map(|n| {
                let gap = (n.position.y - state.position.y - (n.length + state.length) / 2.0).max(0.0);
                let closing = state.speed - n.speed;
                if closing > 0.0 {
                    (-gap / (2.0 * state.speed).max(5.0)).exp()
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max);
        [0.0, -DECEL_BIAS + W_CLOSING * pressure]
    }
}

/// How strongly `target` lane is occupied next to `state`, in [0, 1].
fn blocked(state: &AgentState, target: usize, neighbors: &[AgentState], road: &RoadGeometry) -> f64 {
    let scale = 5.0 + state.speed;
    neighbors
        .iter()
        .filter(|n| n.id != state.id && n.lane(road) == target)
        .map(|n| {
            let gap = ((n.position.y - state.position.y).abs() - (n.length + state.length) / 2.0).max(0.0);
            (-(gap / scale).powi(2)).exp()
        })
        .fold(0.0, f64::max)
}

/// Softmax with temperature over optional scores; `None` entries get zero.
pub fn softmax<const N: usize>(scores: [Option<f64>; N], temperature: f64) -> [f64; N] {
    let max = scores.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights = scores.map(|s| s.map_or(0.0, |s| ((s - max) / temperature).exp()));
    let total: f64 = weights.iter().sum();
    weights.map(|w| w / total)
}

/// Smooth 0→1 blend with zero velocity and acceleration at both ends.
fn quintic_blend(tau: f64) -> (f64, f64) {
    let tau = tau.clamp(0.0, 1.0);
    let s = tau * tau * tau * (10.0 - 15.0 * tau + 6.0 * tau * tau);
    let ds = 30.0 * tau * tau * (1.0 - tau) * (1.0 - tau);
    (s, ds)
}

impl TrajectoryPredictor for PhysicsPredictor {
    fn name(&self) -> &str {
        "physics"
    }

    fn predict(
        &self,
        history: &VehicleHistory,
        neighbors: &[AgentState],
        road: &RoadGeometry,
        planner: &PlannerConfig,
    ) -> Result<PredictedTrajectorySet> {
        let state =
            *history.current().ok_or_else(|| Error::invalid(format!("history of vehicle {} is empty", history.id)))?;
        state.validate()?;
        let lateral_velocity = history.lateral_velocity().unwrap_or(0.0);

        let lat_p = softmax(self.lateral_scores(&state, lateral_velocity, neighbors, road), self.cfg.temperature);
        let lon_scores = self.longitudinal_scores(&state, neighbors, road);
        let lon_p = softmax(lon_scores.map(Some), self.cfg.temperature);

        let lane = state.lane(road);
        let v_long = state.speed * state.heading.cos();
        let t_lc = self.cfg.lane_change_duration;
        let decel = self.cfg.decel;

        let mut trajectories = Vec::with_capacity(6);
        for (li, lateral) in LateralManeuver::ALL.into_iter().enumerate() {
            let target = lane as isize + lateral.lane_offset();
            let target_x =
                if road.has_lane(target) { road.lane_center(target as usize) } else { road.lane_center(lane) };
            for (oi, longitudinal) in LongitudinalManeuver::ALL.into_iter().enumerate() {
                let points = (1..=planner.n_time)
                    .map(|i| {
                        let t = i as f64 * planner.point_period;
                        let (s, ds) = quintic_blend(t / t_lc);
                        let x = state.position.x + (target_x - state.position.x) * s;
                        let vx = (target_x - state.position.x) * ds / t_lc;
                        let (dy, vy) = match longitudinal {
                            LongitudinalManeuver::Maintain => (v_long * t, v_long),
                            LongitudinalManeuver::Decelerate if decel > 0.0 => {
                                let t_stop = v_long / decel;
                                if t < t_stop {
                                    (v_long * t - 0.5 * decel * t * t, v_long - decel * t)
                                } else {
                                    (v_long * t_stop / 2.0, 0.0)
                                }
                            }
                            LongitudinalManeuver::Decelerate => (v_long * t, v_long),
                        };
                        TrajectoryPoint {
                            t,
                            position: Vec2::new(x, state.position.y + dy),
                            velocity: Vec2::new(vx, vy),
                        }
                    })
                    .collect();
                trajectories.push(PredictedTrajectory {
                    maneuver: ManeuverClass { lateral, longitudinal },
                    probability: lat_p[li] * lon_p[oi],
                    points,
                });
            }
        }
        Ok(PredictedTrajectorySet { vehicle: state.id, length: state.length, width: state.width, trajectories })
    }
}

/// Predicts every vehicle in `histories`. Each vehicle sees all of
/// `context` except itself as neighbours.
pub fn predict_all(
    predictor: &dyn TrajectoryPredictor,
    histories: &[VehicleHistory],
    context: &[AgentState],
    road: &RoadGeometry,
    planner: &PlannerConfig,
) -> Result<Vec<PredictedTrajectorySet>> {
    histories
        .iter()
        .map(|history| {
            let neighbors: Vec<AgentState> = context.iter().filter(|a| a.id != history.id).copied().collect();
            predictor
                .predict(history, &neighbors, road, planner)
                .map_err(|e| Error::Agent { id: history.id.0, source: Box::new(e) })
        })
        .collect()
}

#[derive(Serialize)]
struct DumpPoint {
    t: f64,
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
}

#[derive(Serialize)]
struct DumpTrajectory {
    vehicle_id: AgentId,
    maneuver: String,
    probability: f64,
    points: Vec<DumpPoint>,
}

/// Flat JSON dump: one entry per (vehicle, maneuver).
pub fn trajectory_dump(sets: &[PredictedTrajectorySet]) -> serde_json::Value {
    let entries: Vec<DumpTrajectory> = sets
        .iter()
        .flat_map(|set| {
            set.trajectories.iter().map(move |tr| DumpTrajectory {
                vehicle_id: set.vehicle,
                maneuver: tr.maneuver.label(),
                probability: tr.probability,
                points: tr
                    .points
                    .iter()
                    .map(|p| DumpPoint { t: p.t, x: p.position.x, y: p.position.y, vx: p.velocity.x, vy: p.velocity.y })
                    .collect(),
            })
        })
        .collect();
    serde_json::to_value(entries).expect("trajectory dump is plain data")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn road(n: usize) -> RoadGeometry {
        RoadGeometry::new(n, 3.7, 1000.0).unwrap()
    }

    fn predict_one(state: AgentState, neighbors: &[AgentState], road: &RoadGeometry) -> PredictedTrajectorySet {
        let p = PhysicsPredictor::default_config();
        p.predict(&VehicleHistory::from_state(state), neighbors, road, &PlannerConfig::default()).unwrap()
    }

    impl PhysicsPredictor {
        fn default_config() -> Self {
            Self::new(PredictorConfig::default())
        }
    }

    #[test]
    fn leftmost_lane_has_no_left_change() {
        let road = road(3);
        let set = predict_one(AgentState::new(1, road.lane_center(3), 0.0, 25.0), &[], &road);
        assert_eq!(set.lateral_probability(LateralManeuver::LeftChange), 0.0);
        assert!((set.total_probability() - 1.0).abs() < 1e-12);
        assert!(set.lateral_probability(LateralManeuver::RightChange) > 0.0);
    }

    #[test]
    fn single_lane_keeps_all_mass() {
        let road = road(1);
        let set = predict_one(AgentState::new(1, 1.85, 0.0, 25.0), &[], &road);
        assert!((set.lateral_probability(LateralManeuver::KeepLane) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn centred_vehicle_prefers_keep_lane() {
        // Hand evaluation of the softmax: scores keep = 0, left = right = -1
        // at temperature 1, so P(keep) = 1 / (1 + 2 e^-1).
        let road = road(3);
        let set = predict_one(AgentState::new(1, road.lane_center(2), 0.0, 25.0), &[], &road);
        let keep = set.lateral_probability(LateralManeuver::KeepLane);
        let expected = 1.0 / (1.0 + 2.0 * (-1.0f64).exp());
        assert!((keep - 0.576_116_884_8).abs() < 1e-9);
        assert!((keep - expected).abs() < 1e-12);
        assert!(keep > set.lateral_probability(LateralManeuver::LeftChange));
        assert!(keep > set.lateral_probability(LateralManeuver::RightChange));
    }

    #[test]
    fn maintain_advances_constant_distance() {
        let road = road(3);
        let set = predict_one(AgentState::new(1, road.lane_center(2), 0.0, 20.0), &[], &road);
        let tr = set
            .trajectory(ManeuverClass {
                lateral: LateralManeuver::KeepLane,
                longitudinal: LongitudinalManeuver::Maintain,
            })
            .unwrap();
        assert_eq!(tr.points.len(), 25);
        for w in tr.points.windows(2) {
            assert!((w[1].position.y - w[0].position.y - 4.0).abs() < 1e-12);
            assert!((w[1].t - w[0].t - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn lane_change_reaches_target_centre() {
        let road = road(3);
        let start = AgentState::new(1, road.lane_center(2) + 0.4, 0.0, 20.0);
        let set = predict_one(start, &[], &road);
        for tr in &set.trajectories {
            let target = road.lane_center((2 + tr.maneuver.lateral.lane_offset()) as usize);
            let last = tr.points.last().unwrap();
            assert!((last.position.x - target).abs() < 0.05);
            // continuity: first point is about one step from the start
            let first = tr.points[0].position;
            assert!((first - start.position).norm() <= 20.0 * 0.2 + 0.1);
        }
    }

    #[test]
    fn deceleration_floors_at_zero() {
        let road = road(2);
        let set = predict_one(AgentState::new(1, 1.85, 0.0, 3.0), &[], &road);
        for tr in set.trajectories.iter().filter(|t| t.maneuver.longitudinal == LongitudinalManeuver::Decelerate) {
            let mut prev = f64::INFINITY;
            for p in &tr.points {
                assert!(p.velocity.y >= 0.0 && p.velocity.y <= prev);
                prev = p.velocity.y;
            }
            assert_eq!(tr.points.last().unwrap().velocity.y, 0.0);
            assert!((tr.points.last().unwrap().position.y - 9.0 / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn close_lead_raises_deceleration() {
        let road = road(2);
        let me = AgentState::new(1, 1.85, 0.0, 25.0);
        let free = predict_one(me, &[], &road);
        let lead = AgentState::new(2, 1.85, 12.0, 15.0);
        let pressed = predict_one(me, &[lead], &road);
        let dec = |s: &PredictedTrajectorySet| {
            s.trajectories
                .iter()
                .filter(|t| t.maneuver.longitudinal == LongitudinalManeuver::Decelerate)
                .map(|t| t.probability)
                .sum::<f64>()
        };
        assert!(dec(&pressed) > dec(&free));
    }

    #[test]
    fn occupied_target_lane_lowers_change_probability() {
        let road = road(2);
        let me = AgentState::new(1, 1.85, 0.0, 25.0);
        let free = predict_one(me, &[], &road);
        let alongside = AgentState::new(2, 5.55, 1.0, 25.0);
        let blocked = predict_one(me, &[alongside], &road);
        assert!(
            blocked.lateral_probability(LateralManeuver::LeftChange)
                < free.lateral_probability(LateralManeuver::LeftChange)
        );
    }

    #[test]
    fn predict_all_excludes_self_and_tags_errors() {
        let road = road(3);
        let agents: Vec<AgentState> =
            (0..3).map(|i| AgentState::new(i, road.lane_center(2), 30.0 * i as f64, 25.0)).collect();
        let histories: Vec<_> = agents.iter().copied().map(VehicleHistory::from_state).collect();
        let predictor = PhysicsPredictor::default_config();
        let sets = predict_all(&predictor, &histories, &agents, &road, &PlannerConfig::default()).unwrap();
        assert_eq!(sets.len(), 3);
        for s in &sets {
            assert!((s.total_probability() - 1.0).abs() < 1e-9);
        }
        assert!(predict_all(&predictor, &[], &agents, &road, &PlannerConfig::default()).unwrap().is_empty());

        let empty = VehicleHistory::new(AgentId(9), vec![]).unwrap();
        let err = predict_all(&predictor, &[empty], &agents, &road, &PlannerConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Agent { id: 9, .. }));
    }

    #[test]
    fn history_requires_increasing_time() {
        let s = AgentState::new(1, 1.0, 0.0, 1.0);
        let samples = vec![HistorySample { t: 0.0, state: s }, HistorySample { t: 0.0, state: s }];
        assert!(VehicleHistory::new(AgentId(1), samples).is_err());
    }

    #[test]
    fn registry_lookup() {
        let reg = PredictorRegistry::with_builtin(&PredictorConfig::default());
        assert!(reg.get("physics").is_ok());
        assert!(reg.get("social-lstm").is_err());
    }
}
