//! Risk-aware planning over a lane/longitudinal lattice.
//!
//! Nodes sit at every lane centre for `n_horiz` columns spaced
//! `column_spacing` ahead of the ego. Each column maps to the prediction
//! time step at which the ego would reach it, and carries the predicted risk
//! there. Edges connect a node to the next column in the same lane or an
//! adjacent one; their weight is the risk at the destination plus, when
//! enabled, the change in learned lane preference. Nodes above the planning
//! threshold are removed and Dijkstra's algorithm finds the cheapest path
//! across the horizon, falling back to the cheapest of the longest reachable
//! paths.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::config::{PlannerConfig, RiskParams, TimeMapping};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::lane_pref::{lane_risk_lookup, LanePreference, LaneRiskQuery, LaneStats};
use crate::prediction::PredictedTrajectorySet;
use crate::risk::multimodal_kernel;
use crate::road::{AgentState, Lane, RoadGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaneAction {
    Keep,
    Left,
    Right,
}

impl LaneAction {
    pub const ALL: [LaneAction; 3] = [Self::Keep, Self::Left, Self::Right];

    /// Action code used in plan dumps: keep = 1, left = 2, right = 3.
    pub fn code(self) -> u8 {
        match self {
            Self::Keep => 1,
            Self::Left => 2,
            Self::Right => 3,
        }
    }

    pub fn lane_offset(self) -> isize {
        match self {
            Self::Keep => 0,
            Self::Left => 1,
            Self::Right => -1,
        }
    }

    fn between(from: Lane, to: Lane) -> LaneAction {
        match to.cmp(&from) {
            Ordering::Equal => Self::Keep,
            Ordering::Greater => Self::Left,
            Ordering::Less => Self::Right,
        }
    }
}

/// Preference order among equal-cost paths, most preferred first. Paths are
/// compared action by action from the far end of the horizon back toward
/// the ego.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TieBreak(pub [LaneAction; 3]);

impl Default for TieBreak {
    fn default() -> Self {
        Self([LaneAction::Keep, LaneAction::Right, LaneAction::Left])
    }
}

impl TieBreak {
    pub fn validate(&self) -> Result<()> {
        for a in LaneAction::ALL {
            if !self.0.contains(&a) {
                return Err(Error::config("planner.tie_break must list keep, left and right once each"));
            }
        }
        Ok(())
    }

    pub fn rank(&self, action: LaneAction) -> u8 {
        self.0.iter().position(|&a| a == action).unwrap_or(3) as u8
    }
}

/// Planning-relevant state of the vehicle being planned for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoPlanningState {
    pub position: Vec2,
    pub speed: f64,
    pub lane: Lane,
    pub desired_speed: f64,
    pub accel_limit: f64,
}

impl EgoPlanningState {
    /// Speed the ego is expected to have `t` seconds from now when ramping
    /// toward its desired speed at its acceleration limit.
    pub fn projected_speed(&self, t: f64) -> f64 {
        let dv = (self.desired_speed - self.speed).clamp(-self.accel_limit * t, self.accel_limit * t);
        self.speed + dv
    }

    /// Distance covered in `t` seconds under [`Self::projected_speed`].
    pub fn projected_distance(&self, t: f64) -> f64 {
        let (v0, a) = (self.speed, self.accel_limit);
        let dv = self.desired_speed - v0;
        let t_ramp = if a > 0.0 { dv.abs() / a } else { f64::INFINITY };
        if t <= t_ramp {
            v0 * t + 0.5 * dv.signum() * a * t * t
        } else {
            v0 * t_ramp + 0.5 * dv.signum() * a * t_ramp * t_ramp + self.desired_speed * (t - t_ramp)
        }
    }

    /// Time to cover `d` meters under the projected speed profile, with both
    /// the current and desired speed floored at `min_speed`.
    pub fn projected_time(&self, d: f64, min_speed: f64) -> f64 {
        let v0 = self.speed.max(min_speed);
        let target = self.desired_speed.max(min_speed);
        let a = self.accel_limit;
        if !(a > 0.0) || v0 == target {
            return d / v0;
        }
        let t_ramp = (target - v0).abs() / a;
        let d_ramp = 0.5 * (v0 + target) * t_ramp;
        if d > d_ramp {
            return t_ramp + (d - d_ramp) / target;
        }
        if target > v0 {
            ((v0 * v0 + 2.0 * a * d).sqrt() - v0) / a
        } else {
            (v0 - (v0 * v0 - 2.0 * a * d).max(0.0).sqrt()) / a
        }
    }
}

/// Per-lane speed statistics; `None` where no statistics are available.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LaneTraffic {
    pub lanes: Vec<Option<LaneStats>>,
}

/// Floor applied to measured lane speed deviations, m/s.
pub const MIN_LANE_SIGMA: f64 = 0.5;

impl LaneTraffic {
    /// Statistics from the vehicles currently in each lane. Lanes with fewer
    /// than two vehicles use `nominal`.
    pub fn from_agents<'a>(
        agents: impl IntoIterator<Item = &'a AgentState>,
        road: &RoadGeometry,
        nominal: Option<LaneStats>,
    ) -> Self {
        let mut speeds: Vec<Vec<f64>> = vec![Vec::new(); road.num_lanes];
        for a in agents {
            speeds[a.lane(road) - 1].push(a.speed);
        }
        let lanes = speeds
            .iter()
            .map(|s| {
                if s.len() < 2 {
                    return nominal;
                }
                let n = s.len() as f64;
                let mean = s.iter().sum::<f64>() / n;
                let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                Some(LaneStats { mean, sigma: var.sqrt().max(MIN_LANE_SIGMA) })
            })
            .collect();
        Self { lanes }
    }

    pub fn get(&self, lane: Lane) -> Option<LaneStats> {
        lane.checked_sub(1).and_then(|i| self.lanes.get(i).copied().flatten())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanningNode {
    /// 0 for the ego's own node, then `1..=n_horiz`.
    pub column: usize,
    pub lane: Lane,
    pub position: Vec2,
    /// Risk time step the ego is expected to reach this node at.
    pub step: usize,
    pub risk: f64,
    /// Risk at or below the threshold the grid was built with.
    pub admissible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanningEdge {
    pub from: (usize, Lane),
    pub action: LaneAction,
    pub to: (usize, Lane),
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanningGrid {
    num_lanes: usize,
    n_horiz: usize,
    start: PlanningNode,
    /// Column-major: index `(column - 1) * num_lanes + (lane - 1)`.
    nodes: Vec<PlanningNode>,
    /// Outgoing edge weight per node and action; `None` off the road.
    /// Index 0 is the start node, then `1 + node index`.
    weights: Vec<[Option<f64>; 3]>,
}

fn action_slot(action: LaneAction) -> usize {
    match action {
        LaneAction::Keep => 0,
        LaneAction::Left => 1,
        LaneAction::Right => 2,
    }
}

impl PlanningGrid {
    /// Grid from explicit risks and weights. `node_risk[m - 1][l - 1]` is the
    /// risk of node `(m, l)`; `weight(m, l, action)` is the weight of the edge
    /// leaving `(m, l)` (column 0 is the start node).
    pub fn from_parts(
        num_lanes: usize,
        start_lane: Lane,
        start_risk: f64,
        node_risk: &[Vec<f64>],
        threshold: f64,
        mut weight: impl FnMut(usize, Lane, LaneAction) -> f64,
    ) -> Result<Self> {
        if num_lanes == 0 || node_risk.is_empty() {
            return Err(Error::invalid("planning grid needs at least one lane and one column"));
        }
        if !(1..=num_lanes).contains(&start_lane) || node_risk.iter().any(|c| c.len() != num_lanes) {
            return Err(Error::invalid("planning grid dimensions are inconsistent"));
        }
        let n_horiz = node_risk.len();
        let start = PlanningNode {
            column: 0,
            lane: start_lane,
            position: Vec2::new(start_lane as f64, 0.0),
            step: 1,
            risk: start_risk,
            admissible: start_risk <= threshold,
        };
        let mut nodes = Vec::with_capacity(n_horiz * num_lanes);
        for (mi, column) in node_risk.iter().enumerate() {
            for (li, &risk) in column.iter().enumerate() {
                nodes.push(PlanningNode {
                    column: mi + 1,
                    lane: li + 1,
                    position: Vec2::new((li + 1) as f64, (mi + 1) as f64),
                    step: mi + 1,
                    risk,
                    admissible: risk <= threshold,
                });
            }
        }
        let mut grid = Self { num_lanes, n_horiz, start, nodes, weights: Vec::new() };
        grid.weights = grid.compute_weights(|m, l, a, _| Ok(weight(m, l, a)))?;
        Ok(grid)
    }

    fn compute_weights(
        &self,
        mut weight: impl FnMut(usize, Lane, LaneAction, &PlanningNode) -> Result<f64>,
    ) -> Result<Vec<[Option<f64>; 3]>> {
        let mut out = Vec::with_capacity(self.nodes.len() + 1);
        for node in std::iter::once(&self.start).chain(&self.nodes) {
            let mut slots = [None; 3];
            if node.column < self.n_horiz {
                for action in LaneAction::ALL {
                    let to = node.lane as isize + action.lane_offset();
                    if to >= 1 && to as usize <= self.num_lanes {
                        let dest = self.node(node.column + 1, to as usize).expect("in range");
                        let w = weight(node.column, node.lane, action, dest)?;
                        if !w.is_finite() {
                            return Err(Error::NonFinite("edge weight"));
                        }
                        slots[action_slot(action)] = Some(w);
                    }
                }
            }
            out.push(slots);
        }
        Ok(out)
    }

    pub fn num_lanes(&self) -> usize {
        self.num_lanes
    }

    pub fn n_horiz(&self) -> usize {
        self.n_horiz
    }

    pub fn start(&self) -> &PlanningNode {
        &self.start
    }

    pub fn nodes(&self) -> &[PlanningNode] {
        &self.nodes
    }

    pub fn node(&self, column: usize, lane: Lane) -> Option<&PlanningNode> {
        if column == 0 {
            return (lane == self.start.lane).then_some(&self.start);
        }
        if column > self.n_horiz || lane == 0 || lane > self.num_lanes {
            return None;
        }
        self.nodes.get((column - 1) * self.num_lanes + lane - 1)
    }

    fn node_at(&self, slot: usize) -> &PlanningNode {
        if slot == 0 {
            &self.start
        } else {
            &self.nodes[slot - 1]
        }
    }

    fn slot_index(&self, column: usize, lane: Lane) -> usize {
        if column == 0 {
            0
        } else {
            1 + (column - 1) * self.num_lanes + lane - 1
        }
    }

    pub fn weight(&self, column: usize, lane: Lane, action: LaneAction) -> Option<f64> {
        if column == 0 && lane != self.start.lane {
            return None;
        }
        self.weights.get(self.slot_index(column, lane))?[action_slot(action)]
    }

    pub fn edges(&self) -> Vec<PlanningEdge> {
        let mut edges = Vec::new();
        for node in std::iter::once(&self.start).chain(&self.nodes) {
            for action in LaneAction::ALL {
                if let Some(weight) = self.weight(node.column, node.lane, action) {
                    let to_lane = (node.lane as isize + action.lane_offset()) as usize;
                    edges.push(PlanningEdge {
                        from: (node.column, node.lane),
                        action,
                        to: (node.column + 1, to_lane),
                        weight,
                    });
                }
            }
        }
        edges
    }
}

/// Inputs to grid construction other than the predictions themselves.
#[derive(Debug, Clone, Copy)]
pub struct GridContext<'a> {
    pub road: &'a RoadGeometry,
    pub planner: &'a PlannerConfig,
    pub risk: &'a RiskParams,
    pub traffic: &'a LaneTraffic,
    /// Lane-preference lookup; `None` disables the lane term.
    pub preference: Option<&'a LanePreference>,
    /// Threshold recorded in node admissibility flags.
    pub threshold: f64,
}

/// Builds the planning lattice around `ego`.
pub fn build_grid(
    ego: &EgoPlanningState,
    predictions: &[PredictedTrajectorySet],
    ctx: &GridContext<'_>,
) -> Result<PlanningGrid> {
    let cfg = ctx.planner;
    cfg.validate()?;
    ctx.road.validate()?;
    if !(ego.position.is_finite() && ego.speed.is_finite()) {
        return Err(Error::NonFinite("ego state"));
    }
    let per_step = cfg.points_per_step()?;
    let steps = cfg.risk_steps();
    if steps == 0 {
        return Err(Error::config("planner has no risk time steps"));
    }
    for set in predictions {
        for tr in &set.trajectories {
            if tr.points.len() < steps * per_step {
                return Err(Error::invalid(format!(
                    "prediction for vehicle {} has {} points, planner needs {}",
                    set.vehicle,
                    tr.points.len(),
                    steps * per_step
                )));
            }
        }
    }
    let time_of = |column: usize| {
        let d = column as f64 * cfg.column_spacing;
        match cfg.time_mapping {
            TimeMapping::CurrentSpeed => d / ego.speed.max(cfg.min_mapping_speed),
            TimeMapping::DesiredSpeed => d / ego.desired_speed.max(cfg.min_mapping_speed),
            TimeMapping::Projected => ego.projected_time(d, cfg.min_mapping_speed),
        }
    };
    let step_of = |column: usize| {
        let raw = (time_of(column) / cfg.step_period).round();
        (raw.max(1.0) as usize).min(steps)
    };
    let risk_at = |q: Vec2, step: usize| multimodal_kernel(q, predictions, step * per_step, ctx.risk);

    let start_risk = risk_at(ego.position, 1);
    let start = PlanningNode {
        column: 0,
        lane: ego.lane,
        position: ego.position,
        step: 1,
        risk: start_risk,
        admissible: start_risk <= ctx.threshold,
    };
    let mut nodes = Vec::with_capacity(cfg.n_horiz * ctx.road.num_lanes);
    for m in 1..=cfg.n_horiz {
        let step = step_of(m);
        for l in 1..=ctx.road.num_lanes {
            let position = Vec2::new(ctx.road.lane_center(l), ego.position.y + m as f64 * cfg.column_spacing);
            let risk = risk_at(position, step);
            nodes.push(PlanningNode { column: m, lane: l, position, step, risk, admissible: risk <= ctx.threshold });
        }
    }
    let mut grid =
        PlanningGrid { num_lanes: ctx.road.num_lanes, n_horiz: cfg.n_horiz, start, nodes, weights: Vec::new() };

    let preference = if cfg.lane_preference { ctx.preference } else { None };
    grid.weights = grid.compute_weights(|column, lane, _action, dest| {
        let delta = match preference {
            Some(pref) => lane_delta(pref, ctx, ego, lane, dest.lane, time_of(column + 1))?,
            None => 0.0,
        };
        Ok(dest.risk + delta)
    })?;
    Ok(grid)
}

/// Lane-preference change for moving from `from` (at the ego's current
/// speed) into `to` (at the speed projected for time `t`). Zero when either
/// lane lacks traffic statistics.
fn lane_delta(
    pref: &LanePreference,
    ctx: &GridContext<'_>,
    ego: &EgoPlanningState,
    from: Lane,
    to: Lane,
    t: f64,
) -> Result<f64> {
    let (Some(from_stats), Some(to_stats)) = (ctx.traffic.get(from), ctx.traffic.get(to)) else {
        return Ok(0.0);
    };
    let n = ctx.road.num_lanes;
    let from_q = LaneRiskQuery::new(pref.row_for(from, n), from_stats, ego.speed);
    let to_q = LaneRiskQuery::new(pref.row_for(to, n), to_stats, ego.projected_speed(t));
    Ok(lane_risk_lookup(&to_q, pref)? - lane_risk_lookup(&from_q, pref)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathNode {
    pub column: usize,
    pub lane: Lane,
    pub position: Vec2,
    pub risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedPath {
    /// Starts with the ego node (column 0).
    pub nodes: Vec<PathNode>,
    pub total_cost: f64,
    /// The path reaches the last column.
    pub complete: bool,
}

impl PlannedPath {
    pub fn lanes(&self) -> Vec<Lane> {
        self.nodes.iter().map(|n| n.lane).collect()
    }

    pub fn last_column(&self) -> usize {
        self.nodes.last().map_or(0, |n| n.column)
    }

    /// Lane of the first node that differs from the start lane, if any.
    pub fn first_lane_change(&self) -> Option<Lane> {
        let start = self.nodes.first()?.lane;
        self.nodes.iter().map(|n| n.lane).find(|&l| l != start)
    }
}

#[derive(Debug, PartialEq)]
struct QueueEntry {
    key: f64,
    slot: usize,
}

impl Eq for QueueEntry {}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.key.total_cmp(&self.key).then_with(|| other.slot.cmp(&self.slot))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Lowest-cost admissible path across the grid, or the cheapest among the
/// longest reachable paths when the far column cannot be reached. Equal
/// costs go to the path preferred by `tie_break`.
///
/// A node is admissible when its risk is at most `threshold`.
pub fn plan(grid: &PlanningGrid, threshold: f64, tie_break: &TieBreak) -> PlannedPath {
    plan_with_tolerance(grid, threshold, tie_break, 0.0)
}

/// [`plan`], choosing by `tie_break` among all paths whose cost is within
/// `tolerance` of the optimum.
///
/// Candidate paths are compared action by action from the last column back
/// toward the ego, so among near-optimal paths a lane change happens as early
/// as possible instead of being deferred again on every replan.
pub fn plan_with_tolerance(grid: &PlanningGrid, threshold: f64, tie_break: &TieBreak, tolerance: f64) -> PlannedPath {
    let start_path =
        || PlannedPath { nodes: vec![to_path_node(&grid.start)], total_cost: 0.0, complete: grid.n_horiz == 0 };
    if !(grid.start.risk <= threshold) {
        return start_path();
    }
    let best = cheapest_costs(grid, threshold);
    let Some(end_column) = (0..best.len()).filter(|&s| best[s].is_some()).map(|s| grid.node_at(s).column).max() else {
        return start_path();
    };
    if end_column == 0 {
        return start_path();
    }
    let ends: Vec<usize> =
        (1..=grid.num_lanes).map(|l| grid.slot_index(end_column, l)).filter(|&s| best[s].is_some()).collect();
    let optimum = ends.iter().filter_map(|&s| best[s]).fold(f64::INFINITY, f64::min);
    // Suffix sums are accumulated in the opposite order to the forward
    // search, so allow for rounding on top of the requested tolerance.
    let slack = 1e-12 * (1.0 + optimum.abs()) * (end_column as f64 + 1.0);
    let bound = optimum + tolerance.max(0.0) + slack;

    // Walk back from the end column. Every state in a layer shares the same
    // action suffix; each step keeps the predecessors reached by the most
    // preferred action that still fits within the bound.
    let mut layers: Vec<Vec<(usize, f64, usize)>> =
        vec![ends.iter().filter(|&&s| best[s].is_some_and(|c| c <= bound)).map(|&s| (s, 0.0, usize::MAX)).collect()];
    for column in (1..=end_column).rev() {
        let frontier = layers.last().expect("at least one layer");
        let mut next: Vec<(u8, usize, f64, usize)> = Vec::new();
        for (idx, &(slot, suffix, _)) in frontier.iter().enumerate() {
            let lane = grid.node_at(slot).lane;
            for action in LaneAction::ALL {
                let from_lane = lane as isize - action.lane_offset();
                if from_lane < 1 || from_lane as usize > grid.num_lanes {
                    continue;
                }
                let from_lane = from_lane as usize;
                if column == 1 && from_lane != grid.start.lane {
                    continue;
                }
                let from = grid.slot_index(column - 1, from_lane);
                let (Some(g), Some(w)) = (best[from], grid.weight(column - 1, from_lane, action)) else { continue };
                let suffix = w + suffix;
                if g + suffix <= bound {
                    next.push((tie_break.rank(action), from, suffix, idx));
                }
            }
        }
        let Some(top) = next.iter().map(|e| e.0).min() else {
            debug_assert!(false, "optimal predecessor always fits the bound");
            return start_path();
        };
        layers.push(next.into_iter().filter(|e| e.0 == top).map(|(_, s, c, i)| (s, c, i)).collect());
    }

    let mut nodes = Vec::with_capacity(end_column + 1);
    let mut idx = 0;
    for layer in layers.iter().rev() {
        let (slot, _, child) = layer[idx];
        nodes.push(to_path_node(grid.node_at(slot)));
        idx = child;
    }
    let total_cost = nodes
        .windows(2)
        .map(|p| grid.weight(p[0].column, p[0].lane, LaneAction::between(p[0].lane, p[1].lane)).expect("path edge"))
        .sum();
    PlannedPath { complete: end_column == grid.n_horiz, total_cost, nodes }
}

/// Cheapest cost from the start to every admissible reachable slot.
///
/// Edge weights may be negative once the lane-preference term is included;
/// every path to column `m` has exactly `m` edges, so the queue is ordered on
/// weights shifted by a constant per edge, which leaves path rankings
/// unchanged.
fn cheapest_costs(grid: &PlanningGrid, threshold: f64) -> Vec<Option<f64>> {
    let shift = grid.weights.iter().flatten().flatten().fold(0.0f64, |acc, &w| acc.max(-w));
    let mut best: Vec<Option<f64>> = vec![None; 1 + grid.nodes.len()];
    best[0] = Some(0.0);
    let mut heap = BinaryHeap::new();
    heap.push(QueueEntry { key: 0.0, slot: 0 });
    while let Some(QueueEntry { key, slot }) = heap.pop() {
        let node = grid.node_at(slot);
        let cost = best[slot].expect("queued slots have costs");
        if key > cost + shift * node.column as f64 {
            continue;
        }
        for action in LaneAction::ALL {
            let Some(w) = grid.weight(node.column, node.lane, action) else { continue };
            let to_lane = (node.lane as isize + action.lane_offset()) as usize;
            let to = grid.slot_index(node.column + 1, to_lane);
            let dest = grid.node_at(to);
            if !(dest.risk <= threshold) {
                continue;
            }
            let c = cost + w;
            if best[to].is_none_or(|old| c < old) {
                best[to] = Some(c);
                heap.push(QueueEntry { key: c + shift * dest.column as f64, slot: to });
            }
        }
    }
    best
}

fn to_path_node(n: &PlanningNode) -> PathNode {
    PathNode { column: n.column, lane: n.lane, position: n.position, risk: n.risk }
}

/// Time-stamped sample of a reference trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub t: f64,
    pub position: Vec2,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub points: Vec<ReferencePoint>,
}

/// Converts a lattice path into samples every `point_period` over the
/// prediction horizon. The speed ramps toward the desired speed at the
/// acceleration limit; the lateral position follows the path polyline as a
/// function of distance travelled and holds the final lane beyond it.
///
/// For an incomplete path the target speed is capped so the ego would only
/// reach the last admissible node at the end of the horizon.
pub fn path_to_reference(path: &PlannedPath, ego: &EgoPlanningState, cfg: &PlannerConfig) -> Result<Reference> {
    if path.nodes.is_empty() {
        return Err(Error::invalid("cannot build a reference from an empty path"));
    }
    let mut ego = *ego;
    if !path.complete {
        let reach = path.nodes.last().expect("non-empty").position.y - ego.position.y;
        let horizon = cfg.n_time as f64 * cfg.point_period;
        ego.desired_speed = ego.desired_speed.min((reach / horizon).max(0.0));
    }
    let mut polyline: Vec<Vec2> = vec![ego.position];
    polyline.extend(path.nodes.iter().skip(1).map(|n| n.position));
    let lateral_at = |y: f64| -> f64 {
        for w in polyline.windows(2) {
            if y <= w[1].y {
                let span = w[1].y - w[0].y;
                if span <= 0.0 {
                    return w[1].x;
                }
                let s = ((y - w[0].y) / span).clamp(0.0, 1.0);
                return w[0].x + (w[1].x - w[0].x) * s;
            }
        }
        polyline.last().expect("non-empty").x
    };
    let points = (0..=cfg.n_time)
        .map(|k| {
            let t = k as f64 * cfg.point_period;
            let y = ego.position.y + ego.projected_distance(t);
            ReferencePoint { t, position: Vec2::new(lateral_at(y), y), speed: ego.projected_speed(t) }
        })
        .collect();
    Ok(Reference { points })
}

#[derive(Serialize)]
struct DumpNode {
    m: usize,
    l: Lane,
    x: f64,
    y: f64,
    i: usize,
    risk: f64,
    admissible: bool,
}

#[derive(Serialize)]
struct DumpEdge {
    m: usize,
    l: Lane,
    c: u8,
    w: f64,
}

#[derive(Serialize)]
struct DumpStep {
    m: usize,
    l: Lane,
}

#[derive(Serialize)]
struct PlanDump {
    nodes: Vec<DumpNode>,
    edges: Vec<DumpEdge>,
    path: Vec<DumpStep>,
    total_cost: f64,
    complete: bool,
}

/// JSON dump of a grid and the path chosen on it.
pub fn plan_dump(grid: &PlanningGrid, path: &PlannedPath) -> serde_json::Value {
    let dump = PlanDump {
        nodes: std::iter::once(grid.start())
            .chain(grid.nodes())
            .map(|n| DumpNode {
                m: n.column,
                l: n.lane,
                x: n.position.x,
                y: n.position.y,
                i: n.step,
                risk: n.risk,
                admissible: n.admissible,
            })
            .collect(),
        edges: grid
            .edges()
            .into_iter()
            .map(|e| DumpEdge { m: e.from.0, l: e.from.1, c: e.action.code(), w: e.weight })
            .collect(),
        path: path.nodes.iter().map(|n| DumpStep { m: n.column, l: n.lane }).collect(),
        total_cost: path.total_cost,
        complete: path.complete,
    };
    serde_json::to_value(dump).expect("plan dump is plain data")
}

/// Action taken between two consecutive path nodes.
pub fn action_between(from: &PathNode, to: &PathNode) -> LaneAction {
    LaneAction::between(from.lane, to.lane)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prediction::{
        LateralManeuver, LongitudinalManeuver, ManeuverClass, PredictedTrajectory, TrajectoryPoint,
    };
    use crate::risk::multimodal_risk;

    fn ego(speed: f64, desired: f64) -> EgoPlanningState {
        EgoPlanningState { position: Vec2::new(5.55, 0.0), speed, lane: 2, desired_speed: desired, accel_limit: 3.0 }
    }

    fn road() -> RoadGeometry {
        RoadGeometry::new(3, 3.7, 1000.0).unwrap()
    }

    fn stationary(at: Vec2, n: usize) -> PredictedTrajectorySet {
        let points = (1..=n)
            .map(|i| TrajectoryPoint { t: i as f64 * 0.2, position: at, velocity: Vec2::new(0.0, 0.0) })
            .collect();
        PredictedTrajectorySet {
            vehicle: crate::road::AgentId(7),
            length: 4.5,
            width: 1.8,
            trajectories: vec![PredictedTrajectory {
                maneuver: ManeuverClass {
                    lateral: LateralManeuver::KeepLane,
                    longitudinal: LongitudinalManeuver::Maintain,
                },
                probability: 1.0,
                points,
            }],
        }
    }

    fn grid_for(ego: &EgoPlanningState, predictions: &[PredictedTrajectorySet], cfg: &PlannerConfig) -> PlanningGrid {
        let road = road();
        let risk = RiskParams::default();
        let traffic = LaneTraffic::default();
        let ctx =
            GridContext { road: &road, planner: cfg, risk: &risk, traffic: &traffic, preference: None, threshold: 0.5 };
        build_grid(ego, predictions, &ctx).unwrap()
    }

    #[test]
    fn current_speed_mapping_step() {
        let cfg = PlannerConfig { time_mapping: TimeMapping::CurrentSpeed, ..Default::default() };
        let grid = grid_for(&ego(20.0, 30.0), &[], &cfg);
        assert_eq!(grid.node(4, 2).unwrap().step, 10);
    }

    #[test]
    fn projected_mapping_matches_kinematics() {
        let e = ego(20.0, 30.0);
        for d in [5.0, 40.0, 83.3, 200.0] {
            let t = e.projected_time(d, 1.0);
            assert!((e.projected_distance(t) - d).abs() < 1e-9, "d = {d}");
        }
        let slowing = ego(30.0, 20.0);
        let t = slowing.projected_time(100.0, 1.0);
        assert!((slowing.projected_distance(t) - 100.0).abs() < 1e-9);
    }

    #[test]
    fn empty_road_gives_zero_grid() {
        let cfg = PlannerConfig { lane_preference: false, ..Default::default() };
        let grid = grid_for(&ego(25.0, 25.0), &[], &cfg);
        assert!(grid.nodes().iter().all(|n| n.risk == 0.0 && n.admissible));
        assert!(grid.edges().iter().all(|e| e.weight == 0.0));
        let path = plan(&grid, 0.5, &TieBreak::default());
        assert!(path.complete);
        assert_eq!(path.total_cost, 0.0);
        assert!(path.lanes().iter().all(|&l| l == 2));
    }

    #[test]
    fn node_risk_matches_direct_evaluation() {
        let cfg = PlannerConfig::default();
        let e = ego(20.0, 20.0);
        let at = Vec2::new(road().lane_center(3), 60.0);
        let preds = [stationary(at, 25)];
        let grid = grid_for(&e, &preds, &cfg);
        let node = grid.node(6, 3).unwrap();
        let direct = multimodal_risk(node.position, &preds, node.step, &RiskParams::default()).unwrap();
        assert!(direct > 0.0);
        assert_eq!(node.risk, direct);
    }

    #[test]
    fn equal_weights_keep_lane() {
        let risk = vec![vec![0.0; 3]; 4];
        let grid = PlanningGrid::from_parts(3, 2, 0.0, &risk, 1.0, |_, _, _| 0.3).unwrap();
        let path = plan(&grid, 1.0, &TieBreak::default());
        assert_eq!(path.lanes(), vec![2; 5]);
        assert!((path.total_cost - 1.2).abs() < 1e-12);
    }

    #[test]
    fn small_grid_matches_enumeration() {
        let risk = vec![vec![0.0; 2]; 3];
        let w = [[0.4, 0.1, 0.0], [0.5, 0.2, 0.0]];
        let weights = |m: usize, l: Lane, a: LaneAction| -> f64 {
            let base = w[l - 1][action_slot(a)];
            base + 0.1 * m as f64 * (l as f64)
        };
        let grid = PlanningGrid::from_parts(2, 1, 0.0, &risk, 1.0, weights).unwrap();
        let path = plan(&grid, 1.0, &TieBreak::default());

        let mut best = f64::INFINITY;
        for code in 0..8u32 {
            let mut lane = 1usize;
            let mut cost = 0.0;
            for m in 0..3 {
                let next = if code >> m & 1 == 1 { 2 } else { 1 };
                cost += weights(m, lane, LaneAction::between(lane, next));
                lane = next;
            }
            best = best.min(cost);
        }
        assert!(path.complete);
        assert!((path.total_cost - best).abs() < 1e-12);
    }

    #[test]
    fn blocked_column_gives_incomplete_path() {
        let risk = vec![vec![0.0, 0.2], vec![0.1, 0.0], vec![0.9, 0.9], vec![0.0, 0.0]];
        let grid = PlanningGrid::from_parts(2, 1, 0.0, &risk, 0.5, |m, l, a| {
            risk[m][(l as isize + a.lane_offset()) as usize - 1]
        })
        .unwrap();
        let path = plan(&grid, 0.5, &TieBreak::default());
        assert!(!path.complete);
        assert_eq!(path.last_column(), 2);
        assert_eq!(path.lanes(), vec![1, 1, 2]);
        assert_eq!(path.total_cost, 0.0);
    }

    #[test]
    fn inadmissible_start_returns_start_only() {
        let risk = vec![vec![0.0; 2]; 2];
        let grid = PlanningGrid::from_parts(2, 1, 0.9, &risk, 0.5, |_, _, _| 0.0).unwrap();
        let path = plan(&grid, 0.5, &TieBreak::default());
        assert_eq!(path.nodes.len(), 1);
        assert!(!path.complete);
    }

    #[test]
    fn tolerance_prefers_early_change() {
        // Lane 2 carries a tiny cost until the last column, where lane 1 is
        // expensive. Exact planning changes lane at the last step; with a
        // tolerance the change happens at once.
        let risk = vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0], vec![0.9, 0.0]];
        let grid = PlanningGrid::from_parts(2, 1, 0.0, &risk, 1.0, |m, l, a| {
            let to = (l as isize + a.lane_offset()) as usize;
            match (m, to) {
                (3, 1) => 0.9,
                (_, 2) if m < 3 => 1e-6,
                _ => 0.0,
            }
        })
        .unwrap();
        let exact = plan(&grid, 1.0, &TieBreak::default());
        assert_eq!(exact.lanes(), vec![1, 1, 1, 1, 2]);
        let tolerant = plan_with_tolerance(&grid, 1.0, &TieBreak::default(), 1e-3);
        assert_eq!(tolerant.lanes(), vec![1, 2, 2, 2, 2]);
        assert!(tolerant.total_cost <= exact.total_cost + 1e-3);
    }

    fn reference_for(path: &PlannedPath, e: &EgoPlanningState) -> Reference {
        path_to_reference(path, e, &PlannerConfig::default()).unwrap()
    }

    fn straight_path(lanes: &[Lane], road: &RoadGeometry, y0: f64) -> PlannedPath {
        PlannedPath {
            nodes: lanes
                .iter()
                .enumerate()
                .map(|(m, &l)| PathNode {
                    column: m,
                    lane: l,
                    position: Vec2::new(road.lane_center(l), y0 + 10.0 * m as f64),
                    risk: 0.0,
                })
                .collect(),
            total_cost: 0.0,
            complete: true,
        }
    }

    #[test]
    fn keep_lane_reference_is_straight() {
        let r = road();
        let e = ego(20.0, 20.0);
        let reference = reference_for(&straight_path(&[2; 16], &r, 0.0), &e);
        assert!(reference.points.iter().all(|p| (p.position.x - 5.55).abs() < 1e-12 && p.speed == 20.0));
    }

    #[test]
    fn lane_change_moves_one_lane_width() {
        let r = road();
        let e = ego(20.0, 20.0);
        let mut lanes = vec![2; 16];
        for l in lanes.iter_mut().skip(3) {
            *l = 3;
        }
        let reference = reference_for(&straight_path(&lanes, &r, 0.0), &e);
        let first = reference.points.first().unwrap().position.x;
        let last = reference.points.last().unwrap().position.x;
        assert!((last - first - 3.7).abs() < 1e-12);
        // the move happens between the 20 m and 30 m columns, 1.0 s to 1.5 s
        for p in &reference.points {
            if p.t <= 1.0 + 1e-9 {
                assert!((p.position.x - 5.55).abs() < 1e-9);
            } else if p.t >= 1.5 - 1e-9 {
                assert!((p.position.x - 9.25).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn reference_speed_ramps_within_limit() {
        let r = road();
        let e = ego(20.0, 30.0);
        let reference = reference_for(&straight_path(&[2; 16], &r, 0.0), &e);
        for w in reference.points.windows(2) {
            let a = (w[1].speed - w[0].speed) / (w[1].t - w[0].t);
            assert!(a <= e.accel_limit + 1e-9 && a >= 0.0);
        }
        assert_eq!(reference.points.last().unwrap().speed, 30.0);
    }

    #[test]
    fn empty_path_is_rejected() {
        let path = PlannedPath { nodes: vec![], total_cost: 0.0, complete: false };
        assert!(path_to_reference(&path, &ego(20.0, 20.0), &PlannerConfig::default()).is_err());
    }
}
