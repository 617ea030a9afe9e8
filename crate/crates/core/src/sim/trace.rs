use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::Write;

use crate::error::Result;
use crate::road::{AgentId, AgentState, Lane, RoadGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleRecord {
    pub id: AgentId,
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    pub heading: f64,
    pub lane: Lane,
}

impl VehicleRecord {
    pub fn from_state(s: &AgentState, road: &RoadGeometry) -> Self {
        Self { id: s.id, x: s.position.x, y: s.position.y, speed: s.speed, heading: s.heading, lane: s.lane(road) }
    }
}

/// The ego's plan as computed on this tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub id: u64,
    pub lanes: Vec<Lane>,
    pub cost: f64,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub t: f64,
    pub ego: VehicleRecord,
    /// Active surrounding vehicles.
    pub agents: Vec<VehicleRecord>,
    /// Summed single-agent risk at the ego's position from current states.
    pub ego_risk: f64,
    pub off_road: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub plan: Option<PlanRecord>,
}

impl TickRecord {
    pub fn agent(&self, id: AgentId) -> Option<&VehicleRecord> {
        self.agents.iter().find(|a| a.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimEvent {
    /// Footprints started overlapping.
    Collision {
        t: f64,
        a: AgentId,
        b: AgentId,
    },
    LaneChange {
        t: f64,
        vehicle: AgentId,
        from: Lane,
        to: Lane,
    },
    /// A planned vehicle found no admissible path to the horizon.
    PlanIncomplete {
        t: f64,
        vehicle: AgentId,
        last_column: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub dt: f64,
    pub ego_id: AgentId,
    pub ticks: Vec<TickRecord>,
    pub events: Vec<SimEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub duration_s: f64,
    pub ticks: usize,
    pub collisions: usize,
    pub ego_collisions: usize,
    pub ego_lane_changes: Vec<(f64, Lane, Lane)>,
    pub plan_incomplete: usize,
    pub ego_off_road_ticks: usize,
    pub max_ego_risk: f64,
    pub final_ego: Option<VehicleRecord>,
}

impl SimTrace {
    pub fn new(dt: f64, ego_id: u64) -> Self {
        Self { dt, ego_id: AgentId(ego_id), ticks: Vec::new(), events: Vec::new() }
    }

    pub fn collisions(&self) -> impl Iterator<Item = &SimEvent> {
        self.events.iter().filter(|e| matches!(e, SimEvent::Collision { .. }))
    }

    pub fn ego_collisions(&self) -> usize {
        let ego = self.ego_id;
        self.collisions().filter(|e| matches!(e, SimEvent::Collision { a, b, .. } if *a == ego || *b == ego)).count()
    }

    /// `(t, from, to)` for every lane change of `vehicle`.
    pub fn lane_changes(&self, vehicle: AgentId) -> Vec<(f64, Lane, Lane)> {
        self.events
            .iter()
            .filter_map(|e| match *e {
                SimEvent::LaneChange { t, vehicle: v, from, to } if v == vehicle => Some((t, from, to)),
                _ => None,
            })
            .collect()
    }

    pub fn final_tick(&self) -> Option<&TickRecord> {
        self.ticks.last()
    }

    pub fn summary(&self) -> SimSummary {
        let first = self.ticks.first().map_or(0.0, |t| t.t);
        let last = self.ticks.last().map_or(0.0, |t| t.t);
        SimSummary {
            duration_s: last - first,
            ticks: self.ticks.len().saturating_sub(1),
            collisions: self.collisions().count(),
            ego_collisions: self.ego_collisions(),
            ego_lane_changes: self.lane_changes(self.ego_id),
            plan_incomplete: self
                .events
                .iter()
                .filter(|e| matches!(e, SimEvent::PlanIncomplete { vehicle, .. } if *vehicle == self.ego_id))
                .count(),
            ego_off_road_ticks: self.ticks.iter().filter(|t| t.off_road).count(),
            max_ego_risk: self.ticks.iter().map(|t| t.ego_risk).fold(0.0, f64::max),
            final_ego: self.ticks.last().map(|t| t.ego),
        }
    }

    /// Every vehicle's path at 10 Hz in the trajectory CSV format read by
    /// [`crate::data::parse_trajectories`], with `frame = round(10 t)`.
    /// Ticks between frames are dropped.
    pub fn trajectories_csv(&self) -> String {
        let mut s = String::from("vehicle_id,frame,x,y,speed\n");
        for tick in &self.ticks {
            let f = tick.t / crate::data::FRAME_PERIOD;
            if (f - f.round()).abs() > 1e-6 {
                continue;
            }
            for v in std::iter::once(&tick.ego).chain(&tick.agents) {
                let _ = writeln!(s, "{},{},{},{},{}", v.id, f.round() as i64, v.x, v.y, v.speed);
            }
        }
        s
    }

    /// One JSON object per tick, then one per event.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for tick in &self.ticks {
            serde_json::to_writer(&mut out, &serde_json::json!({"tick": tick}))?;
            out.write_all(b"\n")?;
        }
        for event in &self.events {
            serde_json::to_writer(&mut out, &serde_json::json!({"event": event}))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}
