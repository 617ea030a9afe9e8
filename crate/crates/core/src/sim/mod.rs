//! Closed-loop highway simulation.
//!
//! Every tick the planned vehicles (the ego and any `model` agents) track
//! their current reference, everything is integrated by `dt`, and every
//! `replan_period` the planned vehicles predict their neighbours and replan.

mod bicycle;
mod control;
mod trace;

pub use bicycle::step_bicycle;
pub use control::{follow_accel, governed_control, track_reference};
pub use trace::{PlanRecord, SimEvent, SimSummary, SimTrace, TickRecord, VehicleRecord};

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::config::{EgoConfig, ModelConfig};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::lane_pref::LanePreference;
use crate::planner::{
    build_grid, path_to_reference, plan_with_tolerance, EgoPlanningState, GridContext, LaneTraffic, PlannedPath,
    PlanningGrid, Reference,
};
use crate::prediction::{
    predict_all, HistorySample, PredictedTrajectorySet, PredictorRegistry, TrajectoryPredictor, VehicleHistory,
};
use crate::risk::single_agent_risk;
use crate::road::{AgentId, AgentState, ControlInput, Lane, RoadGeometry};
use crate::scenario::{Behavior, ReplaySample, Scenario};

/// Shared planning inputs for one planned vehicle.
#[derive(Clone, Copy)]
pub struct PlanningInputs<'a> {
    pub road: &'a RoadGeometry,
    pub config: &'a ModelConfig,
    pub preference: Option<&'a LanePreference>,
    pub predictor: &'a dyn TrajectoryPredictor,
}

/// Everything produced by one prediction and planning cycle.
#[derive(Debug, Clone)]
pub struct PlanCycle {
    pub predictions: Vec<PredictedTrajectorySet>,
    pub traffic: LaneTraffic,
    pub grid: PlanningGrid,
    pub path: PlannedPath,
    pub reference: Reference,
}

/// Predicts `others`, builds the lattice around `ego` and plans a path.
/// `histories` may omit vehicles; those are predicted from their current
/// state alone.
pub fn plan_cycle(
    ego: &AgentState,
    ego_cfg: &EgoConfig,
    others: &[AgentState],
    histories: &[VehicleHistory],
    inputs: PlanningInputs<'_>,
) -> Result<PlanCycle> {
    let cfg = inputs.config;
    let hist: Vec<VehicleHistory> = others
        .iter()
        .map(|o| histories.iter().find(|h| h.id == o.id).cloned().unwrap_or_else(|| VehicleHistory::from_state(*o)))
        .collect();
    let mut context: Vec<AgentState> = others.to_vec();
    context.push(*ego);
    let predictions = predict_all(inputs.predictor, &hist, &context, inputs.road, &cfg.planner)?;
    let traffic = LaneTraffic::from_agents(others, inputs.road, cfg.planner.nominal_lane_stats);
    let planning = EgoPlanningState {
        position: ego.position,
        speed: ego.speed,
        lane: ego.lane(inputs.road),
        desired_speed: ego_cfg.desired_speed,
        accel_limit: ego_cfg.accel_limit,
    };
    let preference = if cfg.planner.lane_preference { inputs.preference } else { None };
    let ctx = GridContext {
        road: inputs.road,
        planner: &cfg.planner,
        risk: &cfg.risk,
        traffic: &traffic,
        preference,
        threshold: ego_cfg.risk_threshold,
    };
    let grid = build_grid(&planning, &predictions, &ctx)?;
    let path = plan_with_tolerance(&grid, ego_cfg.risk_threshold, &cfg.planner.tie_break, cfg.planner.cost_tolerance);
    let reference = path_to_reference(&path, &planning, &cfg.planner)?;
    Ok(PlanCycle { predictions, traffic, grid, path, reference })
}

/// Position, speed and heading of a replayed vehicle at `t`, or `None`
/// outside the recorded span.
pub fn replay_state(samples: &[ReplaySample], t: f64) -> Option<(Vec2, f64, f64)> {
    let first = samples.first()?;
    let last = samples.last()?;
    let eps = 1e-9;
    if t < first.t_s - eps || t > last.t_s + eps {
        return None;
    }
    if samples.len() == 1 {
        return Some((Vec2::new(first.x_m, first.y_m), first.speed_mps, 0.0));
    }
    let i = samples.partition_point(|s| s.t_s <= t).clamp(1, samples.len() - 1);
    let (a, b) = (samples[i - 1], samples[i]);
    let s = ((t - a.t_s) / (b.t_s - a.t_s)).clamp(0.0, 1.0);
    let pa = Vec2::new(a.x_m, a.y_m);
    let pb = Vec2::new(b.x_m, b.y_m);
    let d = pb - pa;
    let heading = if d.norm() > 1e-9 { d.heading() } else { 0.0 };
    Some((pa + d * s, a.speed_mps + (b.speed_mps - a.speed_mps) * s, heading))
}

struct Planned {
    cfg: EgoConfig,
    reference: Option<Reference>,
    control: ControlInput,
}

struct Vehicle {
    /// Initial state; replay vehicles keep their size from here.
    spec: AgentState,
    state: Option<AgentState>,
    behavior: Behavior,
    planned: Option<Planned>,
}

/// Runs `scenario` to completion.
pub fn run_scenario(
    scenario: &Scenario,
    config: &ModelConfig,
    preference: Option<&LanePreference>,
) -> Result<SimTrace> {
    let registry = PredictorRegistry::with_builtin(&config.prediction);
    let predictor = registry.get(&config.prediction.name)?;
    Simulation::new(scenario, config, preference, predictor)?.run()
}

/// Stepwise simulation; [`run_scenario`] wraps the common case.
pub struct Simulation<'a> {
    road: RoadGeometry,
    config: &'a ModelConfig,
    preference: Option<&'a LanePreference>,
    predictor: &'a dyn TrajectoryPredictor,
    ego: Vehicle,
    agents: Vec<Vehicle>,
    histories: BTreeMap<AgentId, VecDeque<HistorySample>>,
    t: f64,
    start: f64,
    ticks: usize,
    tick: usize,
    replan_every: usize,
    lanes: BTreeMap<AgentId, Lane>,
    touching: BTreeSet<(AgentId, AgentId)>,
    trace: SimTrace,
    plan_count: u64,
}

impl<'a> Simulation<'a> {
    pub fn new(
        scenario: &Scenario,
        config: &'a ModelConfig,
        preference: Option<&'a LanePreference>,
        predictor: &'a dyn TrajectoryPredictor,
    ) -> Result<Self> {
        scenario.validate()?;
        config.validate()?;
        config.planner.validate_for_road(&scenario.road)?;
        let replan_every = config.sim.ticks_per_replan(&config.planner)?;
        let ego_cfg = scenario.ego.config(&config.styles);
        ego_cfg.validate()?;
        let ego_state = scenario.ego.state();
        let ego = Vehicle {
            spec: ego_state,
            state: Some(ego_state),
            behavior: Behavior::ConstantSpeed,
            planned: Some(Planned { cfg: ego_cfg, reference: None, control: ControlInput::default() }),
        };
        let agents = scenario
            .agents
            .iter()
            .map(|spec| {
                let s = spec.state();
                let planned = match &spec.behavior {
                    Behavior::Model { desired_speed_mps, style } => Some(Planned {
                        cfg: EgoConfig::from_style(*style, config.styles.get(*style), *desired_speed_mps),
                        reference: None,
                        control: ControlInput::default(),
                    }),
                    _ => None,
                };
                Vehicle { spec: s, state: None, behavior: spec.behavior.clone(), planned }
            })
            .collect();
        let ticks = (scenario.duration_s / config.sim.dt).round() as usize;
        let mut sim = Self {
            road: scenario.road,
            config,
            preference,
            predictor,
            ego,
            agents,
            histories: BTreeMap::new(),
            t: scenario.start_time_s,
            start: scenario.start_time_s,
            ticks,
            tick: 0,
            replan_every,
            lanes: BTreeMap::new(),
            touching: BTreeSet::new(),
            trace: SimTrace::new(config.sim.dt, scenario.ego.id),
            plan_count: 0,
        };
        let t0 = sim.t;
        for v in &mut sim.agents {
            v.state = match &v.behavior {
                Behavior::Replay { samples } => replay_state(samples, t0).map(|(p, speed, heading)| AgentState {
                    position: p,
                    speed,
                    heading,
                    ..v.spec
                }),
                _ => Some(v.spec),
            };
        }
        sim.observe()?;
        Ok(sim)
    }

    pub fn is_finished(&self) -> bool {
        self.tick >= self.ticks
    }

    /// Current ego state and the active surrounding vehicles.
    pub fn snapshot(&self) -> (AgentState, Vec<AgentState>) {
        (self.ego_state(), self.active())
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn ego_state(&self) -> AgentState {
        self.ego.state.expect("ego always active")
    }

    fn active(&self) -> Vec<AgentState> {
        self.agents.iter().filter_map(|v| v.state).collect()
    }

    fn history_of(&self, id: AgentId) -> Option<VehicleHistory> {
        let samples = self.histories.get(&id)?;
        VehicleHistory::new(id, samples.iter().copied().collect()).ok()
    }

    /// Appends the current states to the histories and the trace, and
    /// detects lane changes and collisions.
    fn observe(&mut self) -> Result<()> {
        let t = self.t;
        let mut everyone = vec![self.ego_state()];
        everyone.extend(self.active());
        for s in &everyone {
            if !(s.position.is_finite() && s.speed.is_finite() && s.heading.is_finite()) {
                return Err(Error::NonFinite("simulation state"));
            }
        }
        let lookback = self.config.prediction.lookback;
        for s in &everyone {
            let h = self.histories.entry(s.id).or_default();
            h.push_back(HistorySample { t, state: *s });
            while h.front().is_some_and(|f| f.t < t - lookback - 1e-9) {
                h.pop_front();
            }
            let lane = s.lane(&self.road);
            if let Some(prev) = self.lanes.insert(s.id, lane) {
                if prev != lane {
                    self.trace.events.push(SimEvent::LaneChange { t, vehicle: s.id, from: prev, to: lane });
                }
            }
        }
        let active_ids: BTreeSet<AgentId> = everyone.iter().map(|s| s.id).collect();
        self.histories.retain(|id, _| active_ids.contains(id));
        self.lanes.retain(|id, _| active_ids.contains(id));

        let mut touching = BTreeSet::new();
        for i in 0..everyone.len() {
            for j in i + 1..everyone.len() {
                let (a, b) = (&everyone[i], &everyone[j]);
                if a.footprint().overlaps(&b.footprint()) {
                    let pair = (a.id.min(b.id), a.id.max(b.id));
                    if !self.touching.contains(&pair) {
                        self.trace.events.push(SimEvent::Collision { t, a: pair.0, b: pair.1 });
                    }
                    touching.insert(pair);
                }
            }
        }
        self.touching = touching;

        let ego = everyone[0];
        let mut ego_risk = 0.0;
        for o in &everyone[1..] {
            ego_risk +=
                single_agent_risk(ego.position, o.position, o.velocity(), o.length, o.width, &self.config.risk)?;
        }
        self.trace.ticks.push(TickRecord {
            t,
            ego: VehicleRecord::from_state(&ego, &self.road),
            agents: everyone[1..].iter().map(|s| VehicleRecord::from_state(s, &self.road)).collect(),
            ego_risk,
            off_road: !self.road.contains_lateral(ego.position.x),
            plan: None,
        });
        Ok(())
    }

    fn replan(&mut self) -> Result<()> {
        let everyone: Vec<AgentState> = std::iter::once(self.ego_state()).chain(self.active()).collect();
        let histories: Vec<VehicleHistory> = everyone.iter().filter_map(|s| self.history_of(s.id)).collect();
        let inputs = PlanningInputs {
            road: &self.road,
            config: self.config,
            preference: self.preference,
            predictor: self.predictor,
        };
        let t = self.t;
        let mut ego_plan = None;
        let mut events = Vec::new();
        let vehicles = std::iter::once(&mut self.ego).chain(self.agents.iter_mut());
        for v in vehicles {
            let (Some(state), Some(planned)) = (v.state, v.planned.as_mut()) else { continue };
            let others: Vec<AgentState> = everyone.iter().filter(|s| s.id != state.id).copied().collect();
            let cycle = plan_cycle(&state, &planned.cfg, &others, &histories, inputs)
                .map_err(|e| Error::Agent { id: state.id.0, source: Box::new(e) })?;
            if !cycle.path.complete {
                events.push(SimEvent::PlanIncomplete { t, vehicle: state.id, last_column: cycle.path.last_column() });
            }
            if ego_plan.is_none() {
                ego_plan = Some(PlanRecord {
                    id: self.plan_count,
                    lanes: cycle.path.lanes(),
                    cost: cycle.path.total_cost,
                    complete: cycle.path.complete,
                });
            }
            planned.reference = Some(cycle.reference);
        }
        self.plan_count += 1;
        self.trace.events.extend(events);
        if let Some(last) = self.trace.ticks.last_mut() {
            last.plan = ego_plan;
        }
        Ok(())
    }

    /// Advances one tick.
    pub fn step(&mut self) -> Result<()> {
        if self.is_finished() {
            return Ok(());
        }
        let due = self.tick.is_multiple_of(self.replan_every);
        if due && (self.config.sim.replan || self.tick == 0) {
            self.replan()?;
        }
        let dt = self.config.sim.dt;
        let config = self.config;
        let sim_cfg = &config.sim;
        let everyone: Vec<AgentState> = std::iter::once(self.ego_state()).chain(self.active()).collect();
        let next_t = self.start + (self.tick + 1) as f64 * dt;
        let vehicles = std::iter::once(&mut self.ego).chain(self.agents.iter_mut());
        for v in vehicles {
            v.state = match (&v.behavior, v.state, v.planned.as_mut()) {
                (Behavior::Replay { samples }, _, _) => replay_state(samples, next_t)
                    .map(|(p, speed, heading)| AgentState { position: p, speed, heading, ..v.spec }),
                (_, Some(state), Some(planned)) => {
                    let others: Vec<AgentState> = everyone.iter().filter(|s| s.id != state.id).copied().collect();
                    let tracked = match &planned.reference {
                        Some(r) => track_reference(&state, r, &planned.cfg, sim_cfg, planned.control),
                        None => planned.control,
                    };
                    let control =
                        governed_control(&state, tracked, &others, planned.cfg.desired_speed, &planned.cfg, sim_cfg);
                    planned.control = control;
                    Some(step_bicycle(&state, control, dt, sim_cfg.wheelbase)?)
                }
                (_, Some(state), None) => Some(step_bicycle(&state, ControlInput::default(), dt, sim_cfg.wheelbase)?),
                (_, None, _) => None,
            };
        }
        self.tick += 1;
        self.t = next_t;
        self.observe()
    }

    pub fn run(mut self) -> Result<SimTrace> {
        while !self.is_finished() {
            self.step()?;
        }
        Ok(self.trace)
    }
}
